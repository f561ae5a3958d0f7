//! Turn-level rewards for a few outcome patterns.
//!
//! cargo run --example reward_trace

use tutorbench::reward::reward_trace;

fn main() -> tutorbench::Result<()> {
    let patterns: [&[bool]; 4] = [
        &[true; 8],
        &[false; 8],
        &[true, false, true],
        &[false, false, true, true, false, true],
    ];
    for outcomes in patterns {
        let trace = reward_trace(outcomes.len(), outcomes)?;
        let marks: String = outcomes
            .iter()
            .map(|&o| if o { '+' } else { '-' })
            .collect();
        let values: Vec<String> = trace.values.iter().map(|v| format!("{v:.3}")).collect();
        println!("{marks:<8} {}", values.join(" "));
    }
    Ok(())
}
