//! CVSS banding and the per-component count statistics.

use slsa_audit::model::{cdf_of_counts, severity_band, summarize_counts};

fn main() {
    for score in [None, Some(0.0), Some(0.1), Some(3.9), Some(4.0), Some(6.9), Some(7.0), Some(8.9), Some(9.0), Some(10.0)] {
        let label = score.map(|s| format!("{s:.1}")).unwrap_or_else(|| "none".into());
        println!("cvss {label:>4} -> {}", severity_band(score).unwrap());
    }

    // vulnerabilities per component in a small sample
    let counts = [0, 0, 3, 12, 1, 48, 0, 7, 250, 2];
    let stats = summarize_counts(&counts).unwrap();
    println!(
        "\nmean {:.2}  median {:.1}  min {}  max {}  stddev {:.2}",
        stats.mean, stats.median, stats.min, stats.max, stats.stddev
    );
    println!("\n<= count  fraction");
    for p in cdf_of_counts(&counts, &[0, 1, 10, 100, 1000]).unwrap() {
        println!("{:>8}  {:.2}", p.count_threshold, p.fraction);
    }
}
