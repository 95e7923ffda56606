use super::{AugmentError, AugmentSource, AugmentedSample, ClassMask, Result};
use crate::numkernel::Tensor;

/// `a ⊙ x + ε (1 − a) ⊙ x`, evaluated per element so that kept entries are
/// copied bit-exactly.
pub fn blend(x: &[f64], mask: &[bool], epsilon: f64) -> Vec<f64> {
    x.iter().zip(mask).map(|(&v, &keep)| if keep { v } else { epsilon * v }).collect()
}

/// Normalized 1-D Gaussian taps of the given (odd) size.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Separable 5x5, σ = 1 blur of an `h x w x ch` grid with reflected borders.
pub fn gaussian_smooth(values: &[f64], h: usize, w: usize, ch: usize) -> Vec<f64> {
    let k = gaussian_kernel(5, 1.0);
    let at = |r: usize, c: usize, z: usize| (r * w + c) * ch + z;
    let mut rows = vec![0.0; values.len()];
    for r in 0..h {
        for c in 0..w {
            for z in 0..ch {
                rows[at(r, c, z)] =
                    (0..5).map(|t| k[t] * values[at(r, reflect(c as isize + t as isize - 2, w), z)]).sum();
            }
        }
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..h {
        for c in 0..w {
            for z in 0..ch {
                out[at(r, c, z)] = (0..5).map(|t| k[t] * rows[at(reflect(r as isize + t as isize - 2, h), c, z)]).sum();
            }
        }
    }
    out
}

/// Bilinear resize of a single-channel map (align-corners sampling).
pub fn resize_bilinear(map: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    if from == to {
        return map.to_vec();
    }
    let (fh, fw) = from;
    let (th, tw) = to;
    let coord = |i: usize, t: usize, f: usize| if t <= 1 { 0.0 } else { i as f64 * (f - 1) as f64 / (t - 1) as f64 };
    let mut out = Vec::with_capacity(th * tw);
    for r in 0..th {
        let y = coord(r, th, fh);
        let (y0, fy) = (y.floor() as usize, y.fract());
        let y1 = (y0 + 1).min(fh - 1);
        for c in 0..tw {
            let x = coord(c, tw, fw);
            let (x0, fx) = (x.floor() as usize, x.fract());
            let x1 = (x0 + 1).min(fw - 1);
            let v = |yy: usize, xx: usize| map[yy * fw + xx];
            out.push(
                (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1)),
            );
        }
    }
    out
}

pub fn apply_blur_mix(
    parent_index: usize,
    x: &Tensor,
    mask: &ClassMask,
    epsilon: f64,
    smoothing: bool,
) -> Result<AugmentedSample> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AugmentError::Parameter(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if mask.indicator.len() != x.len() {
        return Err(AugmentError::Contract(format!("mask has {} entries for {} features", mask.indicator.len(), x.len())));
    }
    let mut values = blend(x.values(), &mask.indicator, epsilon);
    if let [h, w, ch] = *x.shape() {
        if smoothing {
            values = gaussian_smooth(&values, h, w, ch);
        }
    }
    Ok(AugmentedSample {
        parent_index,
        guiding_label: mask.guiding_label,
        features: Tensor::new(x.shape().to_vec(), values)?,
        source: AugmentSource::BuiltinCam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[bool]) -> ClassMask {
        ClassMask { indicator: bits.to_vec(), guiding_label: 0, saliency_fraction: 0.5 }
    }

    #[test]
    fn worked_blend_example() {
        let x = Tensor::from_vec(vec![2.0, 4.0]).unwrap();
        let out = apply_blur_mix(0, &x, &mask(&[true, false]), 0.5, true).unwrap();
        assert_eq!(out.features.values(), &[2.0, 2.0]);
    }

    #[test]
    fn unit_epsilon_and_full_mask_are_identity() {
        let x = Tensor::new(vec![2, 2, 1], vec![0.1, -3.7, 1e-300, 5.5]).unwrap();
        let out = apply_blur_mix(0, &x, &mask(&[true, false, false, true]), 1.0, false).unwrap();
        assert_eq!(out.features, x);
        let out = apply_blur_mix(0, &x, &mask(&[true; 4]), 0.2, false).unwrap();
        assert_eq!(out.features, x);
    }

    #[test]
    fn epsilon_outside_unit_interval_rejected() {
        let x = Tensor::from_vec(vec![1.0]).unwrap();
        assert!(matches!(apply_blur_mix(0, &x, &mask(&[true]), 1.5, false), Err(AugmentError::Parameter(_))));
        assert!(apply_blur_mix(0, &x, &mask(&[true]), -0.1, false).is_err());
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(5, 1.0);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[4]);
        assert_eq!(k[1], k[3]);
        assert!((k[2] / k[1] - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![3.25; 6 * 4 * 2];
        let out = gaussian_smooth(&v, 6, 4, 2);
        assert!(out.iter().all(|x| (x - 3.25).abs() < 1e-12));
    }

    #[test]
    fn bilinear_identity_and_upsample() {
        assert_eq!(resize_bilinear(&[1.0, 2.0, 3.0, 4.0], (2, 2), (2, 2)), vec![1.0, 2.0, 3.0, 4.0]);
        let up = resize_bilinear(&[0.0, 2.0], (1, 2), (1, 3));
        assert_eq!(up, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(3, 1), 0);
    }
}
