//! Pass@k and Recall@k for a made-up batch of ten programs.
//!
//! cargo run --example pass_at_k

use std::collections::BTreeSet;

use tutorbench::eval::{pass_at_k, recall_at_k, tor, tutoring_outcome, DEFAULT_KS};

fn main() -> tutorbench::Result<()> {
    let n = 10;
    for c in [0, 1, 3, 10] {
        let row: Vec<String> = DEFAULT_KS
            .iter()
            .map(|&k| pass_at_k(n, c, k).map(|p| format!("pass@{k}={p:.4}")))
            .collect::<tutorbench::Result<_>>()?;
        println!("c={c:<2} {}", row.join("  "));
    }

    let reference: BTreeSet<String> = ["shop.tax", "shop.round", "shop.Cart.subtotal"]
        .map(String::from)
        .into();
    let programs: Vec<BTreeSet<String>> = (0..n)
        .map(|i| match i % 3 {
            0 => BTreeSet::new(),
            1 => ["shop.tax".to_string()].into(),
            _ => ["shop.tax".to_string(), "shop.round".to_string()].into(),
        })
        .collect();
    for k in DEFAULT_KS {
        println!("recall@{k} = {:.3}", recall_at_k(&programs, &reference, k)?);
    }

    let passes: Vec<bool> = (0..n).map(|i| i == 4).collect();
    let c = passes.iter().filter(|&&p| p).count();
    let pass = DEFAULT_KS
        .iter()
        .map(|&k| Ok((k, pass_at_k(n, c, k)?)))
        .collect::<tutorbench::Result<_>>()?;
    let recall = DEFAULT_KS
        .iter()
        .map(|&k| Ok((k, recall_at_k(&programs, &reference, k)?)))
        .collect::<tutorbench::Result<_>>()?;
    let outcome = tutoring_outcome(&recall, &pass, &DEFAULT_KS)?;
    println!(
        "outcome: recall {:.3}, pass {:.3}",
        outcome.recall, outcome.pass
    );
    println!("pass 21.2 -> 38.7 is {:+.1}%", tor(21.2, 38.7)?);
    Ok(())
}
