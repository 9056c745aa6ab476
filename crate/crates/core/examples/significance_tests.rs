//! Paired t-test over per-participant accuracies and a two-proportion z-test
//! over pooled counts.

use susceptsim::analysis::{paired_t_test, two_proportion_z_test};

fn main() -> susceptsim::Result<()> {
    let with_beliefs = [0.80, 0.70, 0.90, 0.60, 0.75, 0.85, 0.70, 0.80];
    let demo_only = [0.70, 0.65, 0.80, 0.60, 0.70, 0.70, 0.60, 0.75];
    let t = paired_t_test(&with_beliefs, &demo_only)?;
    println!(
        "paired t = {:.4}, p = {:.5}, significant at 0.05: {}",
        t.statistic,
        t.p_value,
        t.significant(0.05)
    );

    let z = two_proportion_z_test(4760, 7000, 6188, 7000)?;
    println!("z = {:.3}, p = {:.3e}", z.statistic, z.p_value);

    let tie = two_proportion_z_test(0, 50, 0, 50)?;
    println!("all-zero counts: z = {}, p = {}, {:?}", tie.statistic, tie.p_value, tie.degenerate);
    Ok(())
}
