use fmri2ges::denoiser::{loss_and_grad, DenoiserConfig, DenoiserParams, NoiseSample};
use fmri2ges::diffusion::DiffusionSchedule;
use fmri2ges::rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn randomized(cfg: DenoiserConfig, seed: u64) -> DenoiserParams<f64> {
    let mut p = DenoiserParams::<f64>::init(cfg, seed).unwrap();
    let mut r = rng::stream(seed, "perturb");
    for t in p.tensors_mut() {
        t.mapv_inplace(|_| 0.1 * r.sample::<f64, _>(StandardNormal));
    }
    p
}

const GRAD_FLOOR: f64 = 1e-6;

#[test]
fn gradients_match_central_differences() {
    let cfg = DenoiserConfig::new(5).with_model(8, 1);
    let params = randomized(cfg, 21);
    let sched = DiffusionSchedule::linear(50, 1e-4, 0.02).unwrap();
    let mut r = rng::stream(22, "batch");
    let batch: Vec<NoiseSample> = [3usize, 41]
        .iter()
        .map(|&t| NoiseSample {
            x0: rng::normal_matrix(&mut r, 4, cfg.data_width),
            cond: rng::normal_matrix(&mut r, 4, 5),
            t,
            eps: rng::normal_matrix(&mut r, 4, cfg.data_width),
        })
        .collect();
    let analytic = loss_and_grad(&params, &batch, &sched).unwrap().grads;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic_flat: Vec<Vec<f64>> =
        analytic.tensors().into_iter().map(|(_, t)| t.iter().copied().collect()).collect();

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (ti, name) in names.iter().enumerate() {
        let len = analytic_flat[ti].len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].as_slice_mut().unwrap()[i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].as_slice_mut().unwrap()[i] -= h;
            let lp = loss_and_grad(&plus, &batch, &sched).unwrap().loss;
            let lm = loss_and_grad(&minus, &batch, &sched).unwrap().loss;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic_flat[ti][i];
            // Central differences at h = 1e-4 cannot resolve gradients below
            // ~1e-12 in f64, so the relative denominator is floored.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
            assert!(rel < 1e-5, "{name}[{i}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}");
        }
    }
    eprintln!("worst relative gradient error {worst:e}");
}
