use pei_core::metrics::{ergas, gaussian_window, psnr, qnr, qnr_from_distortions, ssim, ssim_window_size};
use pei_core::physics::{PansharpeningOperator, Srf};
use pei_core::Image;
use proptest::prelude::*;

fn pattern(c: usize, h: usize, w: usize, phase: f64) -> Image<f64> {
    Image::from_fn(c, h, w, |c, i, j| {
        0.5 + 0.3 * ((i as f64 * 0.9 + phase).sin() * (j as f64 * 0.55 + c as f64).cos()) + 0.01 * c as f64
    })
}

/// SSIM written out window by window with 2-D weights, no separability.
fn oracle_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = {
        let m = h.min(w).min(11);
        if m.is_multiple_of(2) {
            m - 1
        } else {
            m
        }
    };
    let r = (k / 2) as f64;
    let mut wts = vec![0.0; k * k];
    for u in 0..k {
        for v in 0..k {
            let du = u as f64 - r;
            let dv = v as f64 - r;
            wts[u * k + v] = (-(du * du) / 4.5).exp() * (-(dv * dv) / 4.5).exp();
        }
    }
    let total: f64 = wts.iter().sum();
    wts.iter_mut().for_each(|x| *x /= total);
    let c1 = 0.0001;
    let c2 = 0.0009;
    let mut acc = 0.0;
    let mut count = 0.0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    let p = (i + u) * w + j + v;
                    mx += wts[u * k + v] * a[p];
                    my += wts[u * k + v] * b[p];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    let p = (i + u) * w + j + v;
                    let q = wts[u * k + v];
                    vx += q * (a[p] - mx) * (a[p] - mx);
                    vy += q * (b[p] - my) * (b[p] - my);
                    cxy += q * (a[p] - mx) * (b[p] - my);
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    acc / count
}

#[test]
fn fixed_points() {
    let x = pattern(3, 16, 16, 0.0);
    assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(ergas(&x, &x, 4.0).unwrap(), 0.0);
    assert_eq!(qnr_from_distortions(0.0, 0.0), 1.0);
}

#[test]
fn identical_bands_have_no_spectral_distortion() {
    let op = PansharpeningOperator::new(4, 4.0, Srf::flat(2)).unwrap();
    let band = pattern(1, 16, 16, 0.3);
    let x = Image::stack(&[band.clone(), band.clone()]).unwrap();
    let ms_band = pattern(1, 4, 4, 1.0);
    let ms = Image::stack(&[ms_band.clone(), ms_band]).unwrap();
    let pan = pattern(1, 16, 16, 2.0);
    assert_eq!(qnr(&x, &ms, &pan, &op).unwrap().d_lambda, 0.0);
}

#[test]
fn qnr_matches_hand_computation() {
    let op = PansharpeningOperator::new(2, 2.0, Srf::flat(2)).unwrap();
    let x = pattern(2, 16, 16, 0.0);
    let ms = pattern(2, 8, 8, 0.7);
    let pan = pattern(1, 16, 16, 1.3);
    let got = qnr(&x, &ms, &pan, &op).unwrap();

    let plane = |img: &Image<f64>, c: usize| img.plane(c).to_vec();
    // spectral distortion over the two ordered pairs (0,1) and (1,0)
    let q_hi_01 = oracle_ssim(&plane(&x, 1), &plane(&x, 0), 16, 16);
    let q_hi_10 = oracle_ssim(&plane(&x, 0), &plane(&x, 1), 16, 16);
    let q_lo_01 = oracle_ssim(&plane(&ms, 1), &plane(&ms, 0), 8, 8);
    let q_lo_10 = oracle_ssim(&plane(&ms, 0), &plane(&ms, 1), 8, 8);
    let d_lambda = ((q_hi_01 - q_lo_01).abs() + (q_hi_10 - q_lo_10).abs()) / 2.0;
    // spatial distortion against pan and its degraded copy
    let pan_lr = op.blur.apply(&pan).unwrap();
    let mut d_s = 0.0;
    for c in 0..2 {
        let hi = oracle_ssim(&plane(&x, c), pan.data(), 16, 16);
        let lo = oracle_ssim(&plane(&ms, c), pan_lr.data(), 8, 8);
        d_s += (hi - lo).abs() / 2.0;
    }
    let q = (1.0 - d_lambda) * (1.0 - d_s) * (1.0 - d_s).sqrt();
    assert!((got.d_lambda - d_lambda).abs() < 1e-10);
    assert!((got.d_s - d_s).abs() < 1e-10);
    assert!((got.qnr - q).abs() < 1e-10);
}

#[test]
fn ssim_matches_oracle_including_small_images() {
    for (h, w) in [(16, 16), (12, 20), (6, 6), (5, 9)] {
        let a = pattern(1, h, w, 0.1);
        let b = pattern(1, h, w, 0.9);
        assert!((ssim(&a, &b).unwrap() - oracle_ssim(a.data(), b.data(), h, w)).abs() < 1e-12);
    }
    assert_eq!(ssim_window_size(6, 40), 5);
}

#[test]
fn psnr_and_ergas_known_values() {
    let x = Image::filled(2, 4, 4, 0.5);
    let y = x.map(|v| v + 0.1);
    assert!((psnr(&y, &x, 1.0).unwrap() - 20.0).abs() < 1e-10);
    // RMSE 0.1 on mean 0.5 in every band: (100 / 4) * 0.2
    assert!((ergas(&y, &x, 4.0).unwrap() - 5.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn gaussian_window_sums_to_one(half in 0usize..8, sigma in 0.3f64..5.0) {
        let w = gaussian_window(2 * half + 1, sigma);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qnr_in_unit_interval_and_monotone(a in 0.0f64..1.5, b in 0.0f64..1.5, da in 0.0f64..0.5, db in 0.0f64..0.5) {
        let q = qnr_from_distortions(a, b);
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(qnr_from_distortions(a + da, b) <= q);
        prop_assert!(qnr_from_distortions(a, b + db) <= q);
    }

    #[test]
    fn psnr_and_ergas_order_like_mse(e1 in 0.001f64..0.2, e2 in 0.001f64..0.2) {
        let x = Image::filled(1, 4, 4, 0.5);
        let a = x.map(|v| v + e1);
        let b = x.map(|v| v + e2);
        let (pa, pb) = (psnr(&a, &x, 1.0).unwrap(), psnr(&b, &x, 1.0).unwrap());
        let (ea, eb) = (ergas(&a, &x, 1.0).unwrap(), ergas(&b, &x, 1.0).unwrap());
        prop_assert_eq!(e1 < e2, pa > pb);
        prop_assert_eq!(e1 < e2, ea < eb);
    }
}
