//! Tags a target manifest for semi-supervised training at several label budgets.
use pointmix::dataset::{make_ssda_split, split_stride};
use pointmix::{DatasetManifest, Domain, ManifestEntry, SplitTag};

fn main() -> pointmix::Result<()> {
    let entries = (0..28130)
        .map(|i| ManifestEntry {
            id: format!("{i:06}"),
            cloud: format!("clouds/{i:06}.bin").into(),
            labels: format!("labels/{i:06}.json").into(),
            domain: Domain::Target,
            split: SplitTag::None,
        })
        .collect();
    let manifest = DatasetManifest::new(entries);
    for fraction in [0.01, 0.05, 0.10, 0.20] {
        let split = make_ssda_split(&manifest, fraction)?;
        let labeled: Vec<&str> = split.with_split(SplitTag::Labeled).map(|e| e.id.as_str()).take(3).collect();
        println!(
            "{:>4}%: stride {:>3}, {:>5} labeled, first {:?}",
            fraction * 100.0,
            split_stride(fraction),
            split.with_split(SplitTag::Labeled).count(),
            labeled
        );
    }
    Ok(())
}
