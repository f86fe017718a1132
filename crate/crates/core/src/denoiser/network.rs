use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::attention::{position_table, sinusoidal_embed, softmax_rows};
use super::{cast_matrix, DenoiserParams, Real, CONV_TAPS};
use crate::condition::ConditionSequence;
use crate::diffusion::{q_sample, DiffusionSchedule, NoisePredictor};
use crate::error::{Error, Result};

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn silu<T: Real>(v: T) -> T {
    v * sigmoid(v)
}

fn silu_grad<T: Real>(v: T) -> T {
    let s = sigmoid(v);
    s * (T::one() + v * (T::one() - s))
}

/// Row `n` of the result is row `n + offset` of `m`, zero outside the clip.
fn shifted<T: Real>(m: &Array2<T>, offset: isize) -> Array2<T> {
    let rows = m.nrows() as isize;
    let mut out = Array2::zeros(m.dim());
    let lo = (-offset).max(0);
    let hi = (rows - offset).min(rows);
    if lo < hi {
        out.slice_mut(s![lo..hi, ..])
            .assign(&m.slice(s![lo + offset..hi + offset, ..]));
    }
    out
}

fn column_sums<T: Real>(m: &Array2<T>) -> Array2<T> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

struct BlockCache<T> {
    h_in: Array2<T>,
    taps: Vec<Array2<T>>,
    conv_pre: Array2<T>,
    h1: Array2<T>,
    ctx: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Array2<T>,
    mixed: Array2<T>,
    h2: Array2<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
}

/// Intermediate activations from one forward pass, consumed by `backward`.
pub struct ForwardCache<T> {
    x: Array2<T>,
    cond: Array2<T>,
    temb: Array2<T>,
    time_pre: Array2<T>,
    time_act: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    h_out: Array2<T>,
    skip_gate: T,
}

impl<T: Real> ForwardCache<T> {
    /// Final hidden state (frames x d_model) before the output projection.
    pub fn hidden(&self) -> &Array2<T> {
        &self.h_out
    }
}

impl<T: Real> DenoiserParams<T> {
    fn check_inputs(&self, x: &ArrayView2<T>, t: usize, cond: &ArrayView2<T>) -> Result<()> {
        let cfg = &self.config;
        if x.ncols() != cfg.data_width {
            return Err(Error::Shape(format!(
                "denoiser input width {} != {}",
                x.ncols(),
                cfg.data_width
            )));
        }
        if cond.ncols() != cfg.cond_width {
            return Err(Error::Shape(format!(
                "condition width {} != {}",
                cond.ncols(),
                cfg.cond_width
            )));
        }
        if x.nrows() == 0 || cond.nrows() == 0 {
            return Err(Error::Empty("denoiser input".into()));
        }
        if t == 0 {
            return Err(Error::StepOutOfRange { t, steps: 0 });
        }
        Ok(())
    }

    /// Noise prediction, keeping activations for a later backward pass.
    pub fn forward_cached(
        &self,
        x: ArrayView2<T>,
        t: usize,
        cond: ArrayView2<T>,
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_inputs(&x, t, &cond)?;
        let d = self.config.d_model;
        let scale = T::of_f64(1.0 / (d as f64).sqrt());

        let temb_vec = sinusoidal_embed(t as f64, d)?;
        let temb = Array2::from_shape_fn((1, d), |(_, j)| T::of_f64(temb_vec[j]));
        let time_pre = temb.dot(&self.time_w1) + &self.time_b1;
        let time_act = time_pre.mapv(silu);
        let time_vec = time_act.dot(&self.time_w2) + &self.time_b2;

        let pos = position_table::<T>(x.nrows(), d)?;
        let cond_pos = position_table::<T>(cond.nrows(), d)?;
        let mut h = x.dot(&self.in_w) + &self.in_b + &time_vec + &pos;

        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let taps: Vec<Array2<T>> =
                (0..CONV_TAPS).map(|k| shifted(&h, k as isize - 1)).collect();
            let mut conv_pre = Array2::zeros(h.dim()) + &b.conv_b;
            for (tap, w) in taps.iter().zip(&b.conv_w) {
                conv_pre += &tap.dot(w);
            }
            let h1 = &h + &conv_pre.mapv(silu);

            let ctx = cond.dot(&b.cond_w) + &b.cond_b + &cond_pos;
            let q = h1.dot(&b.wq);
            let k = ctx.dot(&b.wk);
            let v = ctx.dot(&b.wv);
            let attn = softmax_rows(&(q.dot(&k.t()) * scale))?;
            let mixed = attn.dot(&v);
            let h2 = &h1 + &mixed.dot(&b.wo) + &b.bo;

            let ff_pre = h2.dot(&b.ff_w1) + &b.ff_b1;
            let ff_act = ff_pre.mapv(silu);
            let h3 = &h2 + &ff_act.dot(&b.ff_w2) + &b.ff_b2;

            caches.push(BlockCache {
                h_in: h,
                taps,
                conv_pre,
                h1,
                ctx,
                q,
                k,
                v,
                attn,
                mixed,
                h2,
                ff_pre,
                ff_act,
            });
            h = h3;
        }
        let skip_gate = (time_act.dot(&self.skip_w)[[0, 0]] + self.skip_b[[0, 0]]).exp();
        let mut out = h.dot(&self.out_w) + &self.out_b;
        out.scaled_add(skip_gate - T::one(), &x);
        let cache = ForwardCache {
            x: x.to_owned(),
            cond: cond.to_owned(),
            temb,
            time_pre,
            time_act,
            blocks: caches,
            h_out: h,
            skip_gate,
        };
        Ok((out, cache))
    }

    pub fn forward(&self, x: ArrayView2<T>, t: usize, cond: ArrayView2<T>) -> Result<Array2<T>> {
        self.forward_cached(x, t, cond).map(|(out, _)| out)
    }

    /// Parameter gradients of `Σ d_out ⊙ forward(...)`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Array2<T>) -> Self {
        let d = self.config.d_model;
        let scale = T::of_f64(1.0 / (d as f64).sqrt());
        let mut g = self.zeros_like();

        g.out_w = cache.h_out.t().dot(d_out);
        g.out_b = column_sums(d_out);
        let mut dh = d_out.dot(&self.out_w.t());

        for (i, (b, c)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let gb = &mut g.blocks[i];

            // Frame-wise MLP.
            let d_ff_act = dh.dot(&b.ff_w2.t());
            gb.ff_w2 = c.ff_act.t().dot(&dh);
            gb.ff_b2 = column_sums(&dh);
            let mut d_ff_pre = d_ff_act;
            d_ff_pre.zip_mut_with(&c.ff_pre, |g, z| *g *= silu_grad(*z));
            gb.ff_w1 = c.h2.t().dot(&d_ff_pre);
            gb.ff_b1 = column_sums(&d_ff_pre);
            let dh2 = &dh + &d_ff_pre.dot(&b.ff_w1.t());

            // Cross-attention.
            gb.wo = c.mixed.t().dot(&dh2);
            gb.bo = column_sums(&dh2);
            let d_mixed = dh2.dot(&b.wo.t());
            let d_attn = d_mixed.dot(&c.v.t());
            let d_v = c.attn.t().dot(&d_mixed);
            let row_dot = (&d_attn * &c.attn).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_logits = (&d_attn - &row_dot) * &c.attn * scale;
            let d_q = d_logits.dot(&c.k);
            let d_k = d_logits.t().dot(&c.q);
            gb.wq = c.h1.t().dot(&d_q);
            gb.wk = c.ctx.t().dot(&d_k);
            gb.wv = c.ctx.t().dot(&d_v);
            let d_ctx = d_k.dot(&b.wk.t()) + d_v.dot(&b.wv.t());
            gb.cond_w = cache.cond.t().dot(&d_ctx);
            gb.cond_b = column_sums(&d_ctx);
            let dh1 = &dh2 + &d_q.dot(&b.wq.t());

            // Temporal convolution.
            let mut d_conv = dh1.clone();
            d_conv.zip_mut_with(&c.conv_pre, |g, z| *g *= silu_grad(*z));
            gb.conv_b = column_sums(&d_conv);
            let mut d_in = dh1;
            for (k, (tap, w)) in c.taps.iter().zip(&b.conv_w).enumerate() {
                gb.conv_w[k] = tap.t().dot(&d_conv);
                d_in += &shifted(&d_conv.dot(&w.t()), 1 - k as isize);
            }
            debug_assert_eq!(d_in.dim(), c.h_in.dim());
            dh = d_in;
        }

        g.in_w = cache.x.t().dot(&dh);
        g.in_b = column_sums(&dh);
        let d_time_vec = column_sums(&dh);
        g.time_w2 = cache.time_act.t().dot(&d_time_vec);
        g.time_b2 = d_time_vec.clone();
        let d_u = (d_out * &cache.x).sum() * cache.skip_gate;
        g.skip_w = cache.time_act.t().mapv(|a| a * d_u);
        g.skip_b = Array2::from_elem((1, 1), d_u);
        let mut d_time_pre = d_time_vec.dot(&self.time_w2.t()) + &self.skip_w.t().mapv(|w| w * d_u);
        d_time_pre.zip_mut_with(&cache.time_pre, |g, z| *g *= silu_grad(*z));
        g.time_w1 = cache.temb.t().dot(&d_time_pre);
        g.time_b1 = d_time_pre;
        g
    }
}

impl<T: Real> NoisePredictor for DenoiserParams<T> {
    fn condition_width(&self) -> usize {
        self.config.cond_width
    }

    fn predict_noise(
        &self,
        x_t: &Array2<f64>,
        t: usize,
        cond: &ConditionSequence,
    ) -> Result<Array2<f64>> {
        let x: Array2<T> = cast_matrix(x_t);
        let c: Array2<T> = cast_matrix(cond.values());
        let out = self.forward(x.view(), t, c.view())?;
        Ok(cast_matrix(&out))
    }
}

/// One training example for the ε-prediction objective.
#[derive(Debug, Clone)]
pub struct NoiseSample {
    pub x0: Array2<f64>,
    pub cond: Array2<f64>,
    pub t: usize,
    pub eps: Array2<f64>,
}

pub struct LossAndGrad<T> {
    pub loss: f64,
    pub grads: DenoiserParams<T>,
}

/// Mean squared ε-prediction error over every entry of the batch, with exact
/// parameter gradients. Samples are evaluated in parallel and reduced in
/// batch order.
pub fn loss_and_grad<T: Real>(
    params: &DenoiserParams<T>,
    batch: &[NoiseSample],
    sched: &DiffusionSchedule,
) -> Result<LossAndGrad<T>> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let total: usize = batch.iter().map(|s| s.eps.len()).sum();
    let norm = 1.0 / total as f64;
    let per_sample: Vec<(f64, DenoiserParams<T>)> = batch
        .par_iter()
        .map(|s| {
            let x_t = q_sample(s.x0.view(), s.t, s.eps.view(), sched)?;
            let x: Array2<T> = cast_matrix(&x_t);
            let c: Array2<T> = cast_matrix(&s.cond);
            let (pred, cache) = params.forward_cached(x.view(), s.t, c.view())?;
            let mut loss = 0.0;
            let mut d_out = Array2::<T>::zeros(pred.dim());
            for ((g, p), e) in d_out.iter_mut().zip(pred.iter()).zip(s.eps.iter()) {
                let diff = p.as_f64() - e;
                loss += diff * diff;
                *g = T::of_f64(2.0 * diff * norm);
            }
            Ok((loss * norm, params.backward(&cache, &d_out)))
        })
        .collect::<Result<_>>()?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grads.add_scaled(&g, T::one());
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(LossAndGrad { loss, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn small_config() -> DenoiserConfig {
        DenoiserConfig { data_width: 6, cond_width: 3, d_model: 8, blocks: 1, init_std: 0.3 }
    }

    fn sample(seed: u64, t: usize) -> NoiseSample {
        let mut r = rng::stream(seed, "sample");
        NoiseSample {
            x0: rng::normal_matrix(&mut r, 4, 6),
            cond: rng::normal_matrix(&mut r, 4, 3),
            t,
            eps: rng::normal_matrix(&mut r, 4, 6),
        }
    }

    #[test]
    fn shift_moves_rows() {
        let m = Array2::from_shape_fn((3, 1), |(r, _)| (r + 1) as f64);
        assert_eq!(shifted(&m, 1).column(0).to_vec(), vec![2.0, 3.0, 0.0]);
        assert_eq!(shifted(&m, -1).column(0).to_vec(), vec![0.0, 1.0, 2.0]);
        assert_eq!(shifted(&m, 0), m);
    }

    #[test]
    fn fresh_network_predicts_zero() {
        let cfg = DenoiserConfig::new(5).with_model(16, 2);
        let p = DenoiserParams::<f64>::init(cfg, 3).unwrap();
        let mut r = rng::stream(1, "x");
        let x = rng::normal_matrix(&mut r, 10, cfg.data_width);
        let c = rng::normal_matrix(&mut r, 10, 5);
        let out = p.forward(x.view(), 7, c.view()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        let again = p.forward(x.view(), 7, c.view()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn forward_rejects_bad_widths() {
        let p = DenoiserParams::<f64>::init(small_config(), 1).unwrap();
        let x = Array2::zeros((4, 6));
        assert!(p.forward(x.view(), 1, Array2::zeros((4, 2)).view()).is_err());
        assert!(p.forward(Array2::zeros((4, 5)).view(), 1, Array2::zeros((4, 3)).view()).is_err());
        assert!(p.forward(x.view(), 0, Array2::zeros((4, 3)).view()).is_err());
    }

    #[test]
    fn fresh_loss_is_mean_squared_noise() {
        let cfg = DenoiserConfig { init_std: 0.02, ..small_config() };
        let p = DenoiserParams::<f64>::init(cfg, 2).unwrap();
        let sched = DiffusionSchedule::linear(10, 1e-3, 0.1).unwrap();
        let batch = vec![sample(1, 3), sample(2, 9)];
        let lg = loss_and_grad(&p, &batch, &sched).unwrap();
        let expected: f64 = batch.iter().flat_map(|s| s.eps.iter()).map(|e| e * e).sum::<f64>()
            / 48.0;
        assert_abs_diff_eq!(lg.loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grads_unchanged() {
        let p = DenoiserParams::<f64>::init(small_config(), 4).unwrap();
        let sched = DiffusionSchedule::linear(10, 1e-3, 0.1).unwrap();
        let batch = vec![sample(5, 2), sample(6, 8)];
        let doubled: Vec<_> = batch.iter().chain(batch.iter()).cloned().collect();
        let a = loss_and_grad(&p, &batch, &sched).unwrap();
        let b = loss_and_grad(&p, &doubled, &sched).unwrap();
        assert_abs_diff_eq!(a.loss, b.loss, epsilon = 1e-12);
        for ((_, ga), (_, gb)) in a.grads.tensors().iter().zip(b.grads.tensors()) {
            for (x, y) in ga.iter().zip(gb.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
        let swapped = vec![batch[1].clone(), batch[0].clone()];
        let c = loss_and_grad(&p, &swapped, &sched).unwrap();
        assert_abs_diff_eq!(a.loss, c.loss, epsilon = 1e-12);
    }
}
