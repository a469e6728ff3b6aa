use bisweep::conformal::{ConformalMap, DiskIdentity};
use bisweep::domain::{Inclusion, Phantom};
use bisweep::fem::{generate_mesh, BisweepSimulator};
use bisweep::geometry::pt;
use bisweep::pipeline::bisweep_to_ntd;

fn series_eigenvalue(rho: f64, kappa: f64, k: usize) -> f64 {
    let mu = (1.0 - kappa) / (1.0 + kappa);
    let q = mu * rho.powi(2 * k as i32);
    2.0 * q / (k as f64 * (1.0 - q))
}

/// RK4 on (u, rσu') in log-radius from near the origin, where u ~ r^k.
fn shooting_eigenvalue(rho: f64, kappa: f64, k: usize) -> f64 {
    let kf = k as f64;
    let f = |s: f64, y: [f64; 2]| [y[1] / s, s * kf * kf * y[0]];
    let s0 = (1e-3f64).ln();
    let mut y = [s0.exp().powi(k as i32), kappa * kf * s0.exp().powi(k as i32)];
    for (a, b, sigma) in [(s0, rho.ln(), kappa), (rho.ln(), 0.0, 1.0)] {
        let n = 20_000;
        let h = (b - a) / n as f64;
        for _ in 0..n {
            let k1 = f(sigma, y);
            let k2 = f(sigma, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f(sigma, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f(sigma, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * ([k1, k2, k3, k4].iter().zip([1.0, 2.0, 2.0, 1.0]).map(|(k, w)| w * k[i]).sum::<f64>());
            }
        }
    }
    y[0] / y[1] - 1.0 / kf
}

#[test]
fn series_matches_radial_shooting() {
    for &(rho, kappa) in &[(0.5, 0.5), (0.3, 2.0), (0.8, 0.1), (0.6, 10.0)] {
        for k in 1..=6 {
            let (a, b) = (series_eigenvalue(rho, kappa, k), shooting_eigenvalue(rho, kappa, k));
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-6), "ρ={rho} κ={kappa} k={k}: {a} vs {b}");
        }
    }
}

#[test]
fn concentric_disk_spectrum() {
    let (rho, kappa) = (0.5, 0.5);
    let map = DiskIdentity::regular(96).unwrap();
    let phantom = Phantom::new(map.domain().clone(), vec![Inclusion::disk(pt(0.0, 0.0), rho, kappa)]).unwrap();
    let e = map.electrode_positions(32).unwrap();
    let sim = BisweepSimulator::new(&phantom, &map, generate_mesh(&phantom, 0.03).unwrap()).unwrap();
    let l = bisweep_to_ntd(&sim.simulate(&e).unwrap(), 6).unwrap();
    for i in 0..6 {
        let k = i / 2 + 1;
        let exact = series_eigenvalue(rho, kappa, k);
        assert!((l.get(i, i) / exact - 1.0).abs() < 0.02, "mode {i}: {} vs {exact}", l.get(i, i));
        for j in 0..6 {
            if j != i {
                assert!(l.get(i, j).abs() < 0.02 * series_eigenvalue(rho, kappa, 1));
            }
        }
    }
}

#[test]
fn uniform_refinement_converges() {
    let map = DiskIdentity::regular(32).unwrap();
    let phantom = Phantom::new(map.domain().clone(), vec![Inclusion::disk(pt(0.1, -0.1), 0.45, 4.0)]).unwrap();
    let e = map.electrode_positions(12).unwrap();
    let mut mesh = generate_mesh(&phantom, 0.12).unwrap();
    let mut levels = vec![];
    for _ in 0..3 {
        let s = BisweepSimulator::new(&phantom, &map, mesh.clone()).unwrap().simulate(&e).unwrap();
        levels.push(s.values().clone());
        mesh = mesh.refine_uniform();
    }
    let d1 = (&levels[0] - &levels[1]).abs().max();
    let d2 = (&levels[1] - &levels[2]).abs().max();
    let order = (d1 / d2).log2();
    assert!(order >= 1.5, "observed order {order} (differences {d1:e}, {d2:e})");
}
