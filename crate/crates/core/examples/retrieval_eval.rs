//! Scores a small database/query split with an untrained network and
//! prints Recall@k, max F1 and PR-AUC.

use mptf::config::RunConfig;
use mptf::dataset::{SplitMode, SynthConfig};
use mptf::index::evaluate;
use mptf::net::FusionNet;
use mptf::pipeline::{build_eval_set, synth_samples};

fn main() -> mptf::Result<()> {
    let cfg = RunConfig::toy().finalize()?;
    let synth = SynthConfig {
        seed: 11,
        n_frames: 60,
        revisit_fraction: 1.0 / 3.0,
        split_mode: SplitMode::Evaluation,
        ..SynthConfig::default()
    };
    let (queries, database): (Vec<_>, Vec<_>) = synth_samples(&synth, &cfg)?.into_iter().partition(|(_, r)| *r);
    let database: Vec<_> = database.into_iter().map(|(s, _)| s).collect();
    let queries: Vec<_> = queries.into_iter().map(|(s, _)| s).collect();

    let net = FusionNet::new(cfg.net.clone())?;
    let (index, qs) = build_eval_set(&net, &database, &queries)?;
    let report = evaluate(&index, &qs, &cfg.eval.ks, cfg.eval.pos_radius, cfg.hash())?;
    println!("database {}, queries {}", report.database_size, report.queries_evaluated);
    for (k, r) in &report.recall_at {
        println!("Recall@{k:<2} {r:.3}");
    }
    println!("max F1    {:.3}", report.max_f1);
    println!("PR-AUC    {:.3}", report.pr_auc);
    Ok(())
}
