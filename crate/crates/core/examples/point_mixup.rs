//! MixUp of a labeled frame with a pseudo-labeled frame across a sweep of mixing ratios.
use pointmix::mixup::{filter_pseudo_labels, mix_with_lambda, MixUpConfig};
use pointmix::synth::{render_domain_frame, simulate_detections, DetectionNoise, SynthConfig};
use pointmix::{Domain, Seed};

fn main() -> pointmix::Result<()> {
    let synth = SynthConfig::default();
    let labeled = render_domain_frame(&synth, Domain::Target, 0, Seed(1))?;
    let mut pseudo = render_domain_frame(&synth, Domain::Target, 1, Seed(1))?;
    let cfg = MixUpConfig::default();
    let detections = simulate_detections(&pseudo, &DetectionNoise::default(), Seed(2))?;
    pseudo.labels = filter_pseudo_labels(&detections, cfg.score_threshold)?;
    println!(
        "labeled: {} points, {} boxes; pseudo: {} points, {} of {} detections kept",
        labeled.cloud.len(),
        labeled.labels.len(),
        pseudo.cloud.len(),
        pseudo.labels.len(),
        detections.len()
    );
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (frame, s) = mix_with_lambda(&labeled, &pseudo, lambda, &cfg, Seed(3))?;
        println!(
            "lambda {lambda:.2}: {:>6} points ({} labeled + {} pseudo of {}), {} boxes, {} pseudo boxes dropped",
            frame.cloud.len(),
            s.labeled_points,
            s.pseudo_points,
            s.pseudo_candidates,
            frame.labels.len(),
            s.dropped_pseudo_boxes
        );
    }
    Ok(())
}
