//! Both stages end to end on disk: synth, split, GT database, CutMix, pseudo labels, MixUp, eval.
use pointmix::pipeline::{
    run_eval, run_filter, run_gtdb, run_noisy_preds, run_split, run_stage1, run_stage2, run_synth, PipelineConfig,
};

fn main() -> pointmix::Result<()> {
    let dir = std::env::temp_dir().join("pointmix-two-stage");
    let _ = std::fs::remove_dir_all(&dir);
    let mut cfg = PipelineConfig::default();
    cfg.seed = 2024;
    cfg.synth.scenes = 12;
    cfg.split.fraction = 0.25;

    run_synth(&cfg, &dir.join("synth"))?;
    let target = dir.join("synth/target/manifest.json");
    let source = dir.join("synth/source/manifest.json");
    run_split(&cfg, &target, &dir.join("split"))?;
    let split = dir.join("split/manifest.json");
    run_gtdb(&cfg, &source, None, &dir.join("gtdb"))?;

    let s1 = run_stage1(&cfg, &source, &split, Some(&dir.join("gtdb")), &dir.join("stage1"))?;
    println!("stage1 {:?}", s1.counts);
    run_noisy_preds(&cfg, &split, &dir.join("preds"))?;
    let f = run_filter(&cfg, &split, &dir.join("preds"), &dir.join("pseudo"))?;
    println!("filter {:?}", f.counts);
    let s2 = run_stage2(&cfg, &split, &dir.join("pseudo/manifest.json"), Some(&dir.join("gtdb")), &dir.join("stage2"))?;
    println!("stage2 {:?}", s2.counts);
    let (out, _) = run_eval(&cfg, &split, &dir.join("preds"), None, None, &dir.join("eval"))?;
    println!("teacher AP {:?}", out.report.per_threshold_ap);
    println!("outputs in {}", dir.display());
    Ok(())
}
