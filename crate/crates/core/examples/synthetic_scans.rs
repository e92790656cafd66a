//! Renders one scene with a 64-beam and a 32-beam sensor.
use pointmix::synth::{default_class_mix, generate_scene, render_scan, BeamModel};
use pointmix::Seed;

fn main() -> pointmix::Result<()> {
    let scene = generate_scene(50.0, 15, &default_class_mix(), Seed(42))?;
    for o in scene.objects.iter().take(5) {
        println!("{:<10} at ({:>6.1}, {:>6.1})", o.class, o.bbox.center[0], o.bbox.center[1]);
    }
    for (name, beams) in [("64-beam", BeamModel::sixty_four_beam()), ("32-beam", BeamModel::thirty_two_beam())] {
        let f = render_scan(&scene, &beams, Seed(42))?;
        let ground = f.cloud.iter().filter(|p| p.z == 0.0).count();
        println!(
            "{name}: {} points ({ground} ground), {} of {} objects hit",
            f.cloud.len(),
            f.labels.len(),
            scene.objects.len()
        );
    }
    Ok(())
}
