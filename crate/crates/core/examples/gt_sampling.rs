//! Builds a GT database from rendered scans and pastes objects into a fresh scan.
use pointmix::augment::{build_gt_database, gt_sample, random_world_augment, AugmentConfig};
use pointmix::synth::{render_domain_frame, SynthConfig};
use pointmix::{Domain, Seed};

fn main() -> pointmix::Result<()> {
    let synth = SynthConfig::default();
    let donors = (0..6)
        .map(|i| render_domain_frame(&synth, Domain::Target, i, Seed(5)))
        .collect::<pointmix::Result<Vec<_>>>()?;
    let db = build_gt_database(&donors);
    for (class, idx) in db.classes() {
        println!("{class:<11} {:>3} objects", idx.len());
    }
    let scene = render_domain_frame(&synth, Domain::Target, 99, Seed(5))?;
    let cfg = AugmentConfig::default();
    let pasted = gt_sample(&scene, &db, &cfg, Seed(6));
    let augmented = random_world_augment(&pasted, &cfg, Seed(7))?;
    println!(
        "scene {} boxes / {} points -> {} boxes / {} points after pasting",
        scene.labels.len(),
        scene.cloud.len(),
        pasted.labels.len(),
        pasted.cloud.len()
    );
    println!("first box before {:?}", pasted.labels.first().map(|l| l.bbox.center));
    println!("first box after  {:?}", augmented.labels.first().map(|l| l.bbox.center));
    Ok(())
}
