use geobridge::bridges::{weighted_mean_bridge, GuidanceSpec, SchemeKind};
use geobridge::geometry::{geodesic_distance, ManifoldPoint};
use geobridge::product::ProductPoint;
use geobridge::sampling::{sample_vmf, NoiseSource};
use geobridge::TimeGrid;

fn main() {
    let seed = 0x5eed_ace5u64;
    let mu = ManifoldPoint::sphere(&[0.0, 0.0, 1.0]).unwrap();
    for s in 0..5u64 {
        let noise = NoiseSource::new(seed ^ (0x90 + s));
        let pts = sample_vmf(&noise, &mu, 2.0, 100).unwrap();
        // anchor = normalized ambient mean
        let mut m = [0.0; 3];
        for p in &pts {
            for k in 0..3 { m[k] += p.coords()[k] / 100.0; }
        }
        let anchor = ManifoldPoint::sphere_normalized(&m).unwrap();
        let mut worst = 0.0f64;
        for p in &pts {
            worst = worst.max(geodesic_distance(p, &anchor).unwrap());
        }
        println!("seed {s}: max angle from anchor {worst:.4} (0.9 pi = {:.4})", 0.9 * std::f64::consts::PI);
        let x = ProductPoint::new(pts).unwrap();
        let spec = GuidanceSpec::new(SchemeKind::WeightedMean, vec![1.0; 100], 0.05).unwrap();
        let grid = TimeGrid::new(0.05, 50).unwrap();
        match weighted_mean_bridge(&x, &spec, &grid, &noise, 0) {
            Ok(p) => println!("   path ok, log_phi {:.4}", p.log_phi),
            Err(e) => println!("   path error: {e}"),
        }
    }
}
