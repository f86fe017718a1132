use ndarray::{s, Array2, Array3};

use std::path::Path;

use super::binary::{decode_array, ArrayData, Checkpoint, NamedArray, CHECKPOINT_MAGIC};
use super::kv::KeyValues;
use crate::denoiser::{DenoiserConfig, DenoiserParams};
use crate::diffusion::GestureClip;
use crate::error::{Error, Result};
use crate::f2g::F2gCheckpoint;
use crate::f2t::{BeamConfig, BigramPrior, EncodingModel, F2tDecoder, RidgeFit, WordRateModel};
use crate::t2g::{ScheduleConfig, T2gModel};
use crate::vocab::EmbeddingTable;

const META: &str = "meta";

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(kv: &KeyValues, key: &str) -> Result<Vec<usize>> {
    let raw: String = kv.require(key)?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Format(format!("bad list entry {p:?} in {key}"))))
        .collect()
}

fn meta(ckpt: &Checkpoint) -> Result<KeyValues> {
    KeyValues::parse(&ckpt.get(META)?.to_text()?)
}

/// The `kind` recorded in a model checkpoint (`t2g`, `f2t` or `f2g`).
pub fn model_kind(ckpt: &Checkpoint) -> Result<String> {
    meta(ckpt)?.require("kind")
}

fn expect_kind(kv: &KeyValues, kind: &str) -> Result<()> {
    let found: String = kv.require("kind")?;
    if found != kind {
        return Err(Error::Format(format!("checkpoint holds a {found} model, expected {kind}")));
    }
    Ok(())
}

fn finish(mut ckpt: Checkpoint, mut kv: KeyValues, echo: &KeyValues) -> Result<Checkpoint> {
    kv.extend(&echo.with_prefix("echo"));
    ckpt.push(NamedArray::text(META, &kv.to_text()))?;
    Ok(ckpt)
}

fn put_denoiser(ckpt: &mut Checkpoint, kv: &mut KeyValues, prefix: &str, p: &DenoiserParams<f32>) -> Result<()> {
    let c = p.config;
    kv.set(&format!("{prefix}.data_width"), c.data_width);
    kv.set(&format!("{prefix}.cond_width"), c.cond_width);
    kv.set(&format!("{prefix}.d_model"), c.d_model);
    kv.set(&format!("{prefix}.blocks"), c.blocks);
    kv.set(&format!("{prefix}.init_std"), c.init_std);
    for (name, t) in p.tensors() {
        ckpt.push(NamedArray::matrix_f32(&format!("{prefix}.{name}"), t))?;
    }
    Ok(())
}

fn get_denoiser(ckpt: &Checkpoint, kv: &KeyValues, prefix: &str) -> Result<DenoiserParams<f32>> {
    let config = DenoiserConfig {
        data_width: kv.require(&format!("{prefix}.data_width"))?,
        cond_width: kv.require(&format!("{prefix}.cond_width"))?,
        d_model: kv.require(&format!("{prefix}.d_model"))?,
        blocks: kv.require(&format!("{prefix}.blocks"))?,
        init_std: kv.require(&format!("{prefix}.init_std"))?,
    };
    let shell = DenoiserParams::<f32>::init(config, 0)?;
    let tensors = shell
        .tensors()
        .into_iter()
        .map(|(name, _)| ckpt.get(&format!("{prefix}.{name}"))?.to_matrix_f32())
        .collect::<Result<Vec<_>>>()?;
    DenoiserParams::from_tensors(config, tensors)
}

fn put_schedule(kv: &mut KeyValues, s: &ScheduleConfig) {
    kv.set("schedule.steps", s.steps);
    kv.set("schedule.beta_start", s.beta_start);
    kv.set("schedule.beta_end", s.beta_end);
}

fn get_schedule(kv: &KeyValues) -> Result<ScheduleConfig> {
    let s = ScheduleConfig {
        steps: kv.require("schedule.steps")?,
        beta_start: kv.require("schedule.beta_start")?,
        beta_end: kv.require("schedule.beta_end")?,
    };
    s.build()?;
    Ok(s)
}

fn get_table(ckpt: &Checkpoint, name: &str) -> Result<EmbeddingTable> {
    EmbeddingTable::from_rows(ckpt.get(name)?.to_matrix_f64()?)
}

pub fn t2g_to_checkpoint(model: &T2gModel, echo: &KeyValues) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    let mut kv = KeyValues::new();
    kv.set("kind", "t2g");
    put_schedule(&mut kv, &model.schedule);
    put_denoiser(&mut ckpt, &mut kv, "text", &model.params)?;
    ckpt.push(NamedArray::matrix_f64("table", model.table.rows()))?;
    finish(ckpt, kv, echo)
}

pub fn t2g_from_checkpoint(ckpt: &Checkpoint) -> Result<T2gModel> {
    let kv = meta(ckpt)?;
    expect_kind(&kv, "t2g")?;
    let params = get_denoiser(ckpt, &kv, "text")?;
    let table = get_table(ckpt, "table")?;
    if table.dim() != params.config.cond_width {
        return Err(Error::Shape(format!(
            "table width {} vs text condition width {}",
            table.dim(),
            params.config.cond_width
        )));
    }
    Ok(T2gModel { params, schedule: get_schedule(&kv)?, table })
}

pub fn f2g_to_checkpoint(model: &F2gCheckpoint, echo: &KeyValues) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    let mut kv = KeyValues::new();
    kv.set("kind", "f2g");
    kv.set("clip_len", model.clip_len);
    kv.set("fps", model.fps);
    put_schedule(&mut kv, &model.schedule);
    put_denoiser(&mut ckpt, &mut kv, "text", &model.text)?;
    put_denoiser(&mut ckpt, &mut kv, "fmri", &model.fmri)?;
    ckpt.push(NamedArray::matrix_f64("table", model.table.rows()))?;
    finish(ckpt, kv, echo)
}

pub fn f2g_from_checkpoint(ckpt: &Checkpoint) -> Result<F2gCheckpoint> {
    let kv = meta(ckpt)?;
    expect_kind(&kv, "f2g")?;
    Ok(F2gCheckpoint {
        text: get_denoiser(ckpt, &kv, "text")?,
        fmri: get_denoiser(ckpt, &kv, "fmri")?,
        schedule: get_schedule(&kv)?,
        table: get_table(ckpt, "table")?,
        clip_len: kv.require("clip_len")?,
        fps: kv.require("fps")?,
    })
}

fn put_ridge(ckpt: &mut Checkpoint, kv: &mut KeyValues, prefix: &str, r: &RidgeFit) -> Result<()> {
    ckpt.push(NamedArray::matrix_f64(&format!("{prefix}.weights"), &r.weights))?;
    ckpt.push(NamedArray::vector_f64(&format!("{prefix}.x_mean"), r.x_mean.as_slice().expect("contiguous")))?;
    ckpt.push(NamedArray::vector_f64(&format!("{prefix}.y_mean"), r.y_mean.as_slice().expect("contiguous")))?;
    ckpt.push(NamedArray::vector_f64(&format!("{prefix}.cv_scores"), &r.cv_scores))?;
    kv.set(&format!("{prefix}.alpha"), r.alpha);
    Ok(())
}

fn get_ridge(ckpt: &Checkpoint, kv: &KeyValues, prefix: &str) -> Result<RidgeFit> {
    let fit = RidgeFit {
        weights: ckpt.get(&format!("{prefix}.weights"))?.to_matrix_f64()?,
        x_mean: ckpt.get(&format!("{prefix}.x_mean"))?.to_vector_f64()?,
        y_mean: ckpt.get(&format!("{prefix}.y_mean"))?.to_vector_f64()?,
        alpha: kv.require(&format!("{prefix}.alpha"))?,
        cv_scores: ckpt.get(&format!("{prefix}.cv_scores"))?.to_vector_f64()?.to_vec(),
    };
    let (p, q) = fit.weights.dim();
    if fit.x_mean.len() != p || fit.y_mean.len() != q {
        return Err(Error::Shape(format!("{prefix}: weights {p}x{q} with means {} and {}", fit.x_mean.len(), fit.y_mean.len())));
    }
    Ok(fit)
}

pub fn f2t_to_checkpoint(model: &F2tDecoder, echo: &KeyValues) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    let mut kv = KeyValues::new();
    kv.set("kind", "f2t");
    let enc = &model.encoding;
    ckpt.push(NamedArray::matrix_f64("encoding.table", enc.table.rows()))?;
    put_ridge(&mut ckpt, &mut kv, "encoding", &enc.ridge)?;
    ckpt.push(NamedArray::vector_f64("encoding.noise_var", enc.noise_var.as_slice().expect("contiguous")))?;
    kv.set("encoding.delays", list(&enc.delays));
    kv.set("encoding.lobes", enc.lobes);
    put_ridge(&mut ckpt, &mut kv, "rate", &model.rate.ridge)?;
    kv.set("rate.leads", list(&model.rate.leads));
    ckpt.push(NamedArray::matrix_f64("prior.table", model.prior.table()))?;
    let b = &model.beam;
    kv.set("beam.width", b.width);
    kv.set("beam.top_p", b.top_p);
    kv.set("beam.draws", b.draws);
    kv.set("beam.lm_weight", b.lm_weight);
    kv.set("beam.brain_weight", b.brain_weight);
    kv.set("beam.max_expansions", b.max_expansions);
    finish(ckpt, kv, echo)
}

pub fn f2t_from_checkpoint(ckpt: &Checkpoint) -> Result<F2tDecoder> {
    let kv = meta(ckpt)?;
    expect_kind(&kv, "f2t")?;
    let encoding = EncodingModel {
        table: get_table(ckpt, "encoding.table")?,
        ridge: get_ridge(ckpt, &kv, "encoding")?,
        noise_var: ckpt.get("encoding.noise_var")?.to_vector_f64()?,
        delays: parse_list(&kv, "encoding.delays")?,
        lobes: kv.require("encoding.lobes")?,
    };
    if encoding.noise_var.len() != encoding.ridge.weights.ncols() {
        return Err(Error::Shape("encoding noise variance does not match voxel count".into()));
    }
    let rate = WordRateModel { ridge: get_ridge(ckpt, &kv, "rate")?, leads: parse_list(&kv, "rate.leads")? };
    let prior = BigramPrior::from_table(ckpt.get("prior.table")?.to_matrix_f64()?)?;
    let beam = BeamConfig {
        width: kv.require("beam.width")?,
        top_p: kv.require("beam.top_p")?,
        draws: kv.require("beam.draws")?,
        lm_weight: kv.require("beam.lm_weight")?,
        brain_weight: kv.require("beam.brain_weight")?,
        max_expansions: kv.require("beam.max_expansions")?,
    };
    Ok(F2tDecoder { encoding, rate, prior, beam })
}

/// One clip becomes a rank-2 array, several equal-length clips a rank-3 one.
pub fn gestures_to_array(name: &str, clips: &[GestureClip]) -> Result<NamedArray> {
    match clips {
        [] => Err(Error::Empty("no gesture clips".into())),
        [one] => Ok(NamedArray::matrix_f64(name, one.frames())),
        many => {
            let (n, w) = many[0].frames().dim();
            if many.iter().any(|c| c.frames().dim() != (n, w)) {
                return Err(Error::Shape("clips of different lengths".into()));
            }
            let data = many.iter().flat_map(|c| c.frames().iter().copied()).collect();
            NamedArray::new(name, vec![many.len(), n, w], ArrayData::F64(data))
        }
    }
}

/// Name of the gesture entry inside a gesture checkpoint.
pub const GESTURES: &str = "gestures";

/// Generated clips plus the config echo, stored as a checkpoint of kind
/// `gestures`.
pub fn gestures_to_checkpoint(clips: &[GestureClip], echo: &KeyValues) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    ckpt.push(gestures_to_array(GESTURES, clips)?)?;
    let mut kv = KeyValues::new();
    kv.set("kind", "gestures");
    kv.set("clips", clips.len());
    finish(ckpt, kv, echo)
}

/// Reads clips from either a gesture checkpoint or a bare array file.
pub fn load_gestures(path: &Path) -> Result<Vec<GestureClip>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let ckpt = Checkpoint::decode(&bytes)?;
        gestures_from_array(ckpt.get(GESTURES)?)
    } else {
        gestures_from_array(&decode_array(&bytes, GESTURES)?)
    }
}

pub fn gestures_from_array(a: &NamedArray) -> Result<Vec<GestureClip>> {
    let ArrayData::F64(values) = &a.data else {
        return Err(Error::Format(format!("gesture array {:?} must hold f64 values", a.name)));
    };
    match a.dims[..] {
        [n, w] => Ok(vec![GestureClip::new(Array2::from_shape_vec((n, w), values.clone()).expect("checked"))?]),
        [k, n, w] => {
            let cube = Array3::from_shape_vec((k, n, w), values.clone()).expect("checked");
            (0..k).map(|i| GestureClip::new(cube.slice(s![i, .., ..]).to_owned())).collect()
        }
        _ => Err(Error::Format(format!("gesture array {:?} has rank {}", a.name, a.dims.len()))),
    }
}
