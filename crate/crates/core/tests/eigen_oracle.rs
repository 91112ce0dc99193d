//! Eigensystem checks on random Hermitian matrices.

use berryforce::{eigensystem, GaugeAnchor, HermitianOperator, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let mut a = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        a[i * n + i] = C64::new(rng.gen_range(-2.0..2.0), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            a[i * n + j] = z;
            a[j * n + i] = z.conj();
        }
    }
    a
}

#[test]
fn two_level_closed_form_matches_characteristic_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let data = random_hermitian(&mut rng, 2);
        let (a, d, b) = (data[0].re, data[3].re, data[1]);
        let mean = 0.5 * (a + d);
        let half = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
        let frame = eigensystem(&HermitianOperator::new(2, data).unwrap(), &GaugeAnchor::LargestComponent).unwrap();
        assert!((frame.energies[0] - (mean - half)).abs() < 1e-13);
        assert!((frame.energies[1] - (mean + half)).abs() < 1e-13);
        for (k, v) in frame.states.iter().enumerate() {
            // (H - E) v = 0 from the first row
            let r = (C64::new(a - frame.energies[k], 0.0)) * v[0] + b * v[1];
            assert!(r.norm() < 1e-12);
        }
    }
}

#[test]
fn random_matrices_are_diagonalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        let n = 2 + trial % 5;
        let data = random_hermitian(&mut rng, n);
        let op = HermitianOperator::new(n, data.clone()).unwrap();
        let frame = eigensystem(&op, &GaugeAnchor::LargestComponent).unwrap();
        let scale = op.frobenius_norm();

        let trace: f64 = (0..n).map(|i| data[i * n + i].re).sum();
        assert!((frame.energies.iter().sum::<f64>() - trace).abs() < 1e-12 * scale);
        let frob: f64 = frame.energies.iter().map(|e| e * e).sum::<f64>().sqrt();
        assert!((frob - scale).abs() < 1e-12 * scale);
        assert!(frame.energies.windows(2).all(|w| w[0] <= w[1]));

        for (k, v) in frame.states.iter().enumerate() {
            let hv = op.apply_vec(v);
            let res: f64 = hv.iter().zip(v).map(|(x, y)| (x - y * frame.energies[k]).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-12 * scale, "trial {trial} band {k}: residual {res:e}");
            for w in &frame.states[k + 1..] {
                let o: C64 = v.iter().zip(w).map(|(x, y)| x.conj() * y).sum();
                assert!(o.norm() < 1e-12);
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-13);
            let anchor = v.iter().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).unwrap();
            assert!(anchor.im.abs() < 1e-14 && anchor.re > 0.0);
        }
    }
}
