//! Which reference dependencies a generated program actually calls.
//!
//! cargo run --example dependency_recall

use std::collections::BTreeSet;

use tutorbench::eval::{extract_dependencies, recall_at_k, CommandExtractor, LexicalExtractor};

const PROGRAM: &str = r#"
from toyshop import pricing as p

def total(self):
    # pricing.round_money would go here
    subtotal = self.subtotal()
    note = "apply_tax(x) is not called"
    return p.round_money(p.apply_tax(subtotal))
"#;

fn main() -> tutorbench::Result<()> {
    let reference: Vec<String> = [
        "toyshop.cart.Cart.subtotal",
        "toyshop.pricing.apply_tax",
        "toyshop.pricing.round_money",
        "toyshop.pricing.TAX_RATE",
    ]
    .map(String::from)
    .into();

    let found = extract_dependencies(&LexicalExtractor, PROGRAM, &reference)?;
    println!("lexical: {found:?}");
    let refs: BTreeSet<String> = reference.iter().cloned().collect();
    println!("recall@1 = {:.2}", recall_at_k(&[found], &refs, 1)?);

    // Any tool that reads the program on stdin and prints dotted paths works.
    let grep = CommandExtractor {
        command: "grep -o 'apply_tax' | sort -u".into(),
    };
    println!(
        "command: {:?}",
        extract_dependencies(&grep, PROGRAM, &reference)?
    );
    Ok(())
}
