use super::model::{backward, forward, ModelInput, ModelParams};
use super::NnError;

/// Per-minute class activation maps at grid resolution, `(T, H, W)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CamMap {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl CamMap {
    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[(t * self.h + i) * self.w + j]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.values[t * self.h * self.w..(t + 1) * self.h * self.w]
    }

    /// Mass-weighted centroid `(row, col)` of one slice in cell coordinates, or
    /// `None` when the slice is all zero.
    pub fn centroid(&self, t: usize) -> Option<(f64, f64)> {
        let (mut m, mut ci, mut cj) = (0.0, 0.0, 0.0);
        for i in 0..self.h {
            for j in 0..self.w {
                let v = self.get(t, i, j);
                m += v;
                ci += v * i as f64;
                cj += v * j as f64;
            }
        }
        (m > 0.0).then(|| (ci / m, cj / m))
    }
}

/// Source index pair and weight for resampling `n_src` points onto `n_dst` with
/// aligned cell centers.
fn lerp_taps(n_src: usize, n_dst: usize) -> Vec<(usize, usize, f64)> {
    (0..n_dst)
        .map(|d| {
            let x = ((d as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(n_src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Grad-CAM on the last conv3d layer for `target` (0 = no alert, 1 = alert), using
/// the pre-softmax score of that class.
pub fn grad_cam(params: &ModelParams, input: &ModelInput, target: usize) -> Result<CamMap, NnError> {
    if target > 1 {
        return Err(NnError::Target(target));
    }
    let cache = forward(params, input)?;
    let mut dlogits = [0.0; 2];
    dlogits[target] = 1.0;
    let grad = backward(params, input, &cache, dlogits, None)?;
    let act = cache.last_conv3d_activation();
    let plan = params.plan();
    let (g, _) = plan.conv3d.last().expect("conv3d stack is never empty");
    let [tp, hp, wp] = g.out_dims()?;
    let k = g.out_channels;
    let positions = tp * hp * wp;
    let mut alpha = vec![0.0; k];
    for row in grad.chunks_exact(k) {
        for (a, v) in alpha.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in &mut alpha {
        *a /= positions as f64;
    }
    let coarse: Vec<f64> = act
        .chunks_exact(k)
        .map(|row| row.iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>().max(0.0))
        .collect();

    let spec = &params.spec;
    let (t_out, h_out, w_out) = (spec.frames, spec.height, spec.width);
    let ti = lerp_taps(tp, t_out);
    let hi = lerp_taps(hp, h_out);
    let wi = lerp_taps(wp, w_out);
    let at = |t: usize, i: usize, j: usize| coarse[(t * hp + i) * wp + j];
    let spatial = |t: usize, i: usize, j: usize| {
        let (i0, i1, fi) = hi[i];
        let (j0, j1, fj) = wi[j];
        let top = at(t, i0, j0) * (1.0 - fj) + at(t, i0, j1) * fj;
        let bottom = at(t, i1, j0) * (1.0 - fj) + at(t, i1, j1) * fj;
        top * (1.0 - fi) + bottom * fi
    };
    let mut values = Vec::with_capacity(t_out * h_out * w_out);
    for &(t0, t1, ft) in &ti {
        for i in 0..h_out {
            for j in 0..w_out {
                let v = spatial(t0, i, j) * (1.0 - ft) + spatial(t1, i, j) * ft;
                values.push(v.max(0.0));
            }
        }
    }
    Ok(CamMap {
        t: t_out,
        h: h_out,
        w: w_out,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_cover_endpoints() {
        let taps = lerp_taps(3, 6);
        assert_eq!(taps[0], (0, 1, 0.0));
        assert_eq!(taps[5], (2, 2, 0.0));
        assert_eq!(lerp_taps(1, 4), vec![(0, 0, 0.0); 4]);
    }
}
