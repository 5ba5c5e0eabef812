//! Metrics on hand-written ID-confidence scores (higher = more ID).

use oodeval::metrics::{fpr_at_95, MetricsRecord};

fn main() -> oodeval::Result<()> {
    let id = [0.9, 0.8, 0.8, 0.75, 0.6];
    let ood = [0.8, 0.5, 0.3, 0.2];
    let rec = MetricsRecord::compute(&id, &ood)?;
    println!("AUROC   {:.4}", rec.auroc);
    println!("AUPR    {:.4} (OOD positive)", rec.aupr);
    println!("AUPR-In {:.4}", rec.aupr_in);
    println!("FPR@95  {:.4}", rec.fpr95);

    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    println!("FPR@95 with ID = 1..100, OOD = {{0.5, 3.5, 97}}: {}", fpr_at_95(&id, &[0.5, 3.5, 97.0])?);
    Ok(())
}
