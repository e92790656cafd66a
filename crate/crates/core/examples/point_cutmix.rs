//! Cross-domain CutMix of one dense source scan into one sparse target scan.
use pointmix::cutmix::{match_source_center, point_cutmix, sample_cut_region, transport_angle, CutMixConfig};
use pointmix::synth::{render_domain_frame, SynthConfig};
use pointmix::{Domain, Seed};

fn main() -> pointmix::Result<()> {
    let synth = SynthConfig::default();
    let seed = Seed(3);
    let source = render_domain_frame(&synth, Domain::Source, 0, seed)?;
    let target = render_domain_frame(&synth, Domain::Target, 0, seed)?;

    let cfg = CutMixConfig::default();
    let region = sample_cut_region(&target, &cfg, seed.child(10))?;
    let c_s = match_source_center(&source, &region.center_point, &cfg, seed.child(11))?;
    let mixed = point_cutmix(&source, &target, &region, &c_s);

    println!("source {} points / {} boxes", source.cloud.len(), source.labels.len());
    println!("target {} points / {} boxes", target.cloud.len(), target.labels.len());
    println!(
        "cut {:.1} x {:.1} m around ({:.1}, {:.1}), rotated by {:.3} rad",
        2.0 * region.rect.half_extent[0],
        2.0 * region.rect.half_extent[1],
        region.center_point.x,
        region.center_point.y,
        transport_angle(&region, &c_s)
    );
    println!("mixed  {} points / {} boxes, domain {}", mixed.cloud.len(), mixed.labels.len(), mixed.domain);
    Ok(())
}
