use cohsense::array::{build_separator, rx_steering};
use cohsense::doa::{music_spectrum, split_subspaces};
use cohsense::linalg::CMatrix;
use cohsense::numerology::{sample_offsets, OfdmNumerology};
use cohsense::sensing::{CfarConfig, RdmEngine};
use cohsense::theory::{
    ici_coeff_a, optimal_na, sinr_block_after, sinr_block_before, sinr_rdm_cc, sinr_rdm_cc_large_na, sinr_rdm_sep,
    BlockSinrInputs, RdmSinrInputs,
};
use cohsense::waveform::{Ofdm, SymbolGrid};
use cohsense::{ArrayGeometry, Complex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type C64 = Complex<f64>;

fn small_num() -> OfdmNumerology {
    OfdmNumerology::new(28e9, 120e3, 64, 6, 8.0 / (64.0 * 120e3)).unwrap()
}

fn geom() -> ArrayGeometry {
    ArrayGeometry::half_wavelength(16, 16, 3e8 / 28e9)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn offsets_monotone_in_delay(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let num = OfdmNumerology::table_one();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let td = num.td() * 0.999_999;
        let x = sample_offsets(lo * td, &num).unwrap();
        let y = sample_offsets(hi * td, &num).unwrap();
        prop_assert!(x.ns <= y.ns && x.ne <= y.ne);
    }

    #[test]
    fn overrun_tracks_delay_minus_cp(frac in 0.0f64..1.0) {
        let num = OfdmNumerology::table_one();
        let tau = num.tcp + frac * (num.td() * 0.999_999 - num.tcp);
        let o = sample_offsets(tau, &num).unwrap();
        let cp = num.cp_samples() as i64;
        prop_assert!(((o.ns as i64 - o.ne as i64) - cp).abs() <= 1);
    }

    #[test]
    fn round_trip_and_parseval(seed in any::<u64>()) {
        let num = small_num();
        let ofdm = Ofdm::<f64>::new(&num).unwrap();
        let grid = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut ChaCha8Rng::seed_from_u64(seed));
        let tx = ofdm.modulate(&grid).unwrap();
        let back = ofdm.demodulate(&tx.samples).unwrap();
        for (a, b) in grid.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).norm() < 1e-9 * a.norm());
        }
        let (l, cp) = (num.block_len(), num.cp_samples());
        for n in 0..num.m {
            let t: f64 = tx.samples[n * l + cp..(n + 1) * l].iter().map(|z| z.norm_sqr()).sum();
            let f: f64 = grid.symbol(n).iter().map(|z| z.norm_sqr()).sum();
            prop_assert!(rel(t, f) < 1e-9);
        }
    }

    #[test]
    fn cp_shift_is_pure_phase(seed in any::<u64>(), shift in 0usize..=8) {
        let num = small_num();
        let ofdm = Ofdm::<f64>::new(&num).unwrap();
        let grid = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut ChaCha8Rng::seed_from_u64(seed));
        let tx = ofdm.modulate(&grid).unwrap();
        let mut delayed = vec![C64::default(); shift];
        delayed.extend_from_slice(&tx.samples[..tx.len() - shift]);
        let nc = num.nc as f64;
        for n in 0..num.m {
            let y = ofdm.demod_window(&delayed, n).unwrap();
            for (p, (y, s)) in y.iter().zip(grid.symbol(n)).enumerate() {
                let phase = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * (p * shift) as f64 / nc);
                prop_assert!((y - s * phase).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn pseudoinverse_identity(a in 0.0f64..10.0, gap in 0.8f64..20.0) {
        let g = geom();
        let sep = build_separator::<f64>(&[a, a + gap], &g).unwrap();
        let b = CMatrix::from_columns(&[
            rx_steering::<f64>(a, &g).elements,
            rx_steering::<f64>(a + gap, &g).elements,
        ]).unwrap();
        let prod = sep.pinv.matmul(&b).unwrap();
        prop_assert!(prod.sub(&CMatrix::identity(2)).unwrap().max_abs() < 1e-9);
        for &l in &sep.lambda {
            prop_assert!(l >= 1.0 / g.nr as f64 - 1e-12);
        }
    }

    #[test]
    fn noiseless_separation_is_exact(a in -20.0f64..20.0, gap in 1.0f64..15.0, seed in any::<u64>()) {
        use rand::Rng;
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sep = build_separator::<f64>(&[a, a + gap], &g).unwrap();
        let x = [C64::new(rng.random(), rng.random()), C64::new(rng.random(), rng.random())];
        let b0 = rx_steering::<f64>(a, &g).elements;
        let b1 = rx_steering::<f64>(a + gap, &g).elements;
        let y: Vec<C64> = b0.iter().zip(&b1).map(|(p, q)| p * x[0] + q * x[1]).collect();
        let est = sep.pinv.matvec(&y).unwrap();
        prop_assert!((est[0] - x[0]).norm() < 1e-9 && (est[1] - x[1]).norm() < 1e-9);
    }

    #[test]
    fn block_identity_at_zero_na(ne in 0.0f64..1.0, g in -2.0f64..6.0, fdt in 0.0f64..0.25) {
        let gamma0 = 10f64.powf(g);
        let x = BlockSinrInputs { ne, na: 0.0, ns: (ne + 0.1).min(1.0), gamma0, fdt };
        prop_assert!(rel(sinr_block_after(&x), sinr_block_before(ne, gamma0)) < 1e-12);
    }

    #[test]
    fn rdm_identity_at_zero_na(ne in 0.0f64..1.0, s in -14.0f64..-6.0, fdt in 0.0f64..0.25, lambda in 0.0625f64..2.0) {
        let x = RdmSinrInputs {
            block: BlockSinrInputs { ne, na: 0.0, ns: (ne + 0.1).min(1.0), gamma0: 1.0, fdt },
            m: 256,
            nc: 4096,
            lambda_u: lambda,
            sigma2: 10f64.powf(s),
            mean_inv_symbol_power: 17.0 / 9.0,
            gain2: 5e-10,
            symbol_power: 1.0,
        };
        prop_assert!(rel(sinr_rdm_cc(&x), sinr_rdm_sep(&x)) < 1e-12);
    }

    #[test]
    fn ici_coefficient_without_doppler(ne in 0.0f64..1.0, na in 0.0f64..1.0) {
        let d = (na - ne).abs();
        prop_assert!((ici_coeff_a(na, ne, 0.0) - d * (1.0 - d)).abs() < 1e-12);
    }

    #[test]
    fn block_sinr_rises_until_overrun(ne in 0.05f64..0.6, g in 3.0f64..8.0, fdt in 0.0f64..0.1, steps in 4usize..40) {
        let gamma0 = 10f64.powf(g);
        let mut last = f64::NEG_INFINITY;
        for i in 0..steps {
            let na = ne * i as f64 / steps as f64;
            let v = sinr_block_after(&BlockSinrInputs { ne, na, ns: ne + 0.07, gamma0, fdt });
            prop_assert!(v >= last * (1.0 - 1e-12));
            last = v;
        }
    }

    #[test]
    fn optimal_na_beats_dense_scan(ne in 50usize..2000, g in 1.0f64..6.0, fdt in 0.0f64..0.1) {
        let (nc, ns) = (4096, ne + 290);
        let gamma0 = 10f64.powf(g);
        let best = optimal_na(ne, ns, nc, gamma0, fdt);
        let top = best.sinr_at_ne.max(best.sinr_at_ns);
        let frac = |n: usize| n as f64 / nc as f64;
        for na in (0..=ns).step_by(7) {
            let v = sinr_block_after(&BlockSinrInputs { ne: frac(ne), na: frac(na), ns: frac(ns), gamma0, fdt });
            prop_assert!(v <= top * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rdm_sinr_saturates(ne in 0.05f64..0.6, fdt in 0.0f64..0.1, na_frac in 0.0f64..1.0) {
        let mk = |sigma2: f64, na: f64| RdmSinrInputs {
            block: BlockSinrInputs { ne, na, ns: ne + 0.07, gamma0: 1.0, fdt },
            m: 256,
            nc: 4096,
            lambda_u: 0.1,
            sigma2,
            mean_inv_symbol_power: 17.0 / 9.0,
            gain2: 1e-9,
            symbol_power: 1.0,
        };
        let na = na_frac * (ne + 0.07);
        let a = sinr_rdm_cc(&mk(1e-30, na));
        let b = sinr_rdm_cc(&mk(1e-34, na));
        prop_assert!(a.is_finite() && rel(a, b) < 1e-6);
        let c = sinr_rdm_cc_large_na(&mk(1e-30, ne + 0.2));
        let d = sinr_rdm_cc_large_na(&mk(1e-34, ne + 0.2));
        prop_assert!(c.is_finite() && rel(c, d) < 1e-6);
    }

    #[test]
    fn noise_projector_is_idempotent(seed in any::<u64>(), u in 1usize..4) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let a = CMatrix::from_row_major(n, n, (0..n * n).map(|_| C64::new(rng.random(), rng.random())).collect()).unwrap();
        let r = &a * &a.adjoint();
        let p = split_subspaces(&r, u).unwrap().noise_projector();
        prop_assert!((&p * &p).sub(&p).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn music_invariant_to_noise_basis_phase(seed in any::<u64>(), phi in 0.0f64..std::f64::consts::TAU) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = geom();
        let b = rx_steering::<f64>(rng.random_range(-10.0..10.0), &g).elements;
        let mut r = CMatrix::<f64>::identity(g.nr).scale(0.01);
        for i in 0..g.nr {
            for j in 0..g.nr {
                r[(i, j)] += b[i] * b[j].conj();
            }
        }
        let split = split_subspaces(&r, 1).unwrap();
        let mut rotated = split.clone();
        let rot = C64::from_polar(1.0, phi);
        for i in 0..rotated.noise_basis.rows() {
            for j in 0..rotated.noise_basis.cols() {
                rotated.noise_basis[(i, j)] *= rot;
            }
        }
        let grid: Vec<f64> = (0..50).map(|i| -10.0 + 0.4 * i as f64).collect();
        let p = music_spectrum(&split, &grid, &g);
        let q = music_spectrum(&rotated, &grid, &g);
        for (x, y) in p.values.iter().zip(&q.values) {
            prop_assert!(rel(*x, *y) < 1e-9);
        }
    }

    #[test]
    fn rdm_scales_with_rx_gain(seed in any::<u64>(), c_re in -3.0f64..3.0, c_im in -3.0f64..3.0) {
        let num = small_num();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tx = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut rng);
        let rx = SymbolGrid::<f64>::random_qam16(num.nc, num.m, &mut rng);
        let c = C64::new(c_re, c_im);
        let scaled = SymbolGrid::from_vec(num.nc, num.m, rx.as_slice().iter().map(|z| z * c).collect()).unwrap();
        let engine = RdmEngine::<f64>::new(&num);
        let a = engine.build(&rx, &tx).unwrap();
        let b = engine.build(&scaled, &tx).unwrap();
        for (x, y) in a.bins().iter().zip(b.bins()) {
            prop_assert!((x * c - y).norm() < 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn cfar_scale_falls_with_pfa(a in 1e-12f64..1e-1, b in 1e-12f64..1e-1) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at = |pfa| CfarConfig { pfa, ..CfarConfig::default() }.alpha();
        prop_assert!(at(lo) >= at(hi));
    }
}
