//! Parses tracer replies into a running belief over knowledge components.
//!
//! cargo run --example knowledge_tracing

use tutorbench::agents::{parse_kt_output, KnowledgeBelief};
use tutorbench::domain::{DepType, KnowledgeComponent, KnowledgeSpec};

fn main() {
    let spec = KnowledgeSpec {
        task_id: "shop-total".into(),
        code_contexts: String::new(),
        dependencies: vec![
            KnowledgeComponent::dependency(1, "shop.pricing.apply_tax", DepType::CrossFile),
            KnowledgeComponent::dependency(2, "shop.cart.Cart.subtotal", DepType::IntraClass),
        ],
        solution_steps: vec![
            KnowledgeComponent::solution_step(1, "Sum the item prices"),
            KnowledgeComponent::solution_step(2, "Apply tax and round to cents"),
        ],
    };

    let replies = [
        "Known knowledge components: [dep:2]\nUnknown knowledge components: [dep:1, step:1, step:2]",
        "The student now sums prices.\n- Known knowledge components: [sum the item prices]\n- Unknown knowledge components: [dep:1]",
        "No idea what the student knows.",
        "**Known Knowledge Components:** [apply_tax, step:2]\n**Unknown Knowledge Components:** []",
    ];
    let mut belief = KnowledgeBelief::initial(&spec);
    for (i, reply) in replies.iter().enumerate() {
        let turn = i + 2;
        match parse_kt_output(reply, &spec) {
            Some(lists) => belief = belief.updated(&lists, turn),
            None => println!("turn {turn}: unparseable, keeping the previous belief"),
        }
        println!("turn {turn}:\n{}", belief.render_lists());
    }
}
