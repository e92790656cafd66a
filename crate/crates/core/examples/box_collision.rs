//! Separating-axis collision next to the polygon-clipping reference.
use pointmix::geom::{box_bev_polygon, boxes_collide, oracle_boxes_collide};
use pointmix::Box3D;

fn main() -> pointmix::Result<()> {
    let a = Box3D::new([0.0, 0.0, 0.8], [4.5, 1.9, 1.6], 0.0)?;
    let cases = [
        ("overlapping", Box3D::new([3.0, 0.5, 0.8], [4.5, 1.9, 1.6], 0.4)?),
        ("touching edges", Box3D::new([4.5, 0.0, 0.8], [4.5, 1.9, 1.6], 0.0)?),
        ("rotated corner", Box3D::new([3.6, 2.4, 0.8], [4.5, 1.9, 1.6], std::f64::consts::FRAC_PI_4)?),
        ("far away", Box3D::new([20.0, -5.0, 0.8], [0.8, 0.7, 1.7], 1.0)?),
    ];
    println!("reference footprint {:?}", box_bev_polygon(&a));
    for (name, b) in cases {
        let (oracle, area) = oracle_boxes_collide(&a, &b);
        println!("{name:<15} SAT {:<5} clip {:<5} overlap {area:.4} m^2", boxes_collide(&a, &b), oracle);
    }
    Ok(())
}
