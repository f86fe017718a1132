use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};

use super::binary::{read_array, write_array, NamedArray};
use super::kv::{world_config_from_kv, world_config_to_kv, KeyValues};
use crate::diffusion::GestureClip;
use crate::error::{Error, Result};
use crate::f2t::FmriRecord;
use crate::skeleton::{bones, FRAME_WIDTH};
use crate::synthdata::{Datasets, F2tRecord, SplitSizes, T2gRecord, UnpairedRecord, WordChain, World, WorldConfig};
use crate::vocab::{EmbeddingTable, WordId, SILENCE};

pub const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT_NAME: &str = "fmri2ges-dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub world: WorldConfig,
    pub text_table: EmbeddingTable,
    pub feature_table: EmbeddingTable,
    pub data: Datasets,
    pub manifest: KeyValues,
}

fn sizes_to_kv(s: &SplitSizes) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("f2t_records", s.f2t_records);
    kv.set("f2t_words", s.f2t_words);
    kv.set("t2g_records", s.t2g_records);
    kv.set("t2g_words", s.t2g_words);
    kv.set("unpaired_records", s.unpaired_records);
    kv.set("unpaired_words", s.unpaired_words);
    kv.set("corpus_sequences", s.corpus_sequences);
    kv.set("corpus_words", s.corpus_words);
    kv
}

fn sizes_from_kv(kv: &KeyValues) -> Result<SplitSizes> {
    Ok(SplitSizes {
        f2t_records: kv.require("f2t_records")?,
        f2t_words: kv.require("f2t_words")?,
        t2g_records: kv.require("t2g_records")?,
        t2g_words: kv.require("t2g_words")?,
        unpaired_records: kv.require("unpaired_records")?,
        unpaired_words: kv.require("unpaired_words")?,
        corpus_sequences: kv.require("corpus_sequences")?,
        corpus_words: kv.require("corpus_words")?,
    })
}

struct Writer {
    arrays: Vec<(String, NamedArray)>,
}

impl Writer {
    fn add(&mut self, a: NamedArray) {
        let file = format!("{}.f2gb", a.name);
        self.arrays.push((file, a));
    }

    fn chains<'a>(&mut self, split: &str, chains: impl Iterator<Item = &'a WordChain>) {
        let (mut groups, mut sizes, mut words) = (Vec::new(), Vec::new(), Vec::new());
        for c in chains {
            groups.push(c.groups.len() as u32);
            for g in &c.groups {
                sizes.push(g.len() as u32);
                words.extend_from_slice(g);
            }
        }
        self.add(NamedArray::vector_u32(&format!("{split}.groups"), &groups));
        self.add(NamedArray::vector_u32(&format!("{split}.group_sizes"), &sizes));
        self.add(NamedArray::vector_u32(&format!("{split}.words"), &words));
    }

    fn fmri<'a>(&mut self, split: &str, records: impl Iterator<Item = &'a FmriRecord>, voxels: usize) {
        let rows: Vec<_> = records.map(|r| r.voxels().view()).collect();
        let m = if rows.is_empty() {
            Array2::zeros((0, voxels))
        } else {
            ndarray::concatenate(ndarray::Axis(0), &rows).expect("equal voxel counts")
        };
        self.add(NamedArray::matrix_f64(&format!("{split}.fmri"), &m));
    }
}

/// Writes every split plus the embedding tables and a manifest. The output
/// depends only on the inputs, so regenerating from the same seed gives
/// identical bytes.
pub fn write_dataset(dir: &Path, world: &World, data: &Datasets, echo: &KeyValues) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &world.config;
    let mut w = Writer { arrays: Vec::new() };
    w.add(NamedArray::matrix_f64("text_table", world.text_table.rows()));
    w.add(NamedArray::matrix_f64("feature_table", world.feature_table.rows()));
    w.fmri("paired_f2t", data.paired_f2t.iter().map(|r| &r.fmri), cfg.voxels);
    w.chains("paired_f2t", data.paired_f2t.iter().map(|r| &r.chain));
    w.chains("paired_t2g", data.paired_t2g.iter().map(|r| &r.chain));
    let frames: Vec<u32> = data.paired_t2g.iter().map(|r| r.frame_words.len() as u32).collect();
    w.add(NamedArray::vector_u32("paired_t2g.frames", &frames));
    let frame_words: Vec<u32> = data.paired_t2g.iter().flat_map(|r| r.frame_words.iter().copied()).collect();
    w.add(NamedArray::vector_u32("paired_t2g.frame_words", &frame_words));
    let clips: Vec<_> = data.paired_t2g.iter().map(|r| r.gestures.frames().view()).collect();
    let gestures =
        if clips.is_empty() { Array2::zeros((0, FRAME_WIDTH)) } else { ndarray::concatenate(ndarray::Axis(0), &clips).expect("width") };
    w.add(NamedArray::matrix_f64("paired_t2g.gestures", &gestures));
    w.fmri("unpaired_fmri", data.unpaired_fmri.iter().map(|r| &r.fmri), cfg.voxels);
    w.chains("unpaired_fmri", data.unpaired_fmri.iter().map(|r| &r.truth));
    let lengths: Vec<u32> = data.corpus.iter().map(|c| c.len() as u32).collect();
    w.add(NamedArray::vector_u32("corpus.lengths", &lengths));
    w.add(NamedArray::vector_u32("corpus.words", &data.corpus.concat()));

    let mut kv = KeyValues::new();
    kv.set("format", FORMAT_NAME);
    kv.set("version", super::binary::FORMAT_VERSION);
    kv.set("seed", data.seed);
    kv.extend(&world_config_to_kv(cfg).with_prefix("world"));
    kv.extend(&sizes_to_kv(&data.sizes).with_prefix("sizes"));
    kv.set("fps", cfg.fps);
    kv.set("tr_seconds", cfg.tr_seconds);
    kv.set("frames_per_tr", cfg.frames_per_tr());
    kv.set("vocab", cfg.vocab);
    kv.set("voxels", cfg.voxels);
    kv.set("reported_voxels", cfg.reported_voxels());
    kv.set("region", cfg.region);
    kv.set("frame_width", FRAME_WIDTH);
    kv.set("bones", bones().iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(","));
    kv.set("split.paired_f2t.records", data.paired_f2t.len());
    kv.set("split.paired_t2g.records", data.paired_t2g.len());
    kv.set("split.unpaired_fmri.records", data.unpaired_fmri.len());
    kv.set("split.corpus.sequences", data.corpus.len());
    for (file, a) in &w.arrays {
        kv.set(&format!("array.{}", a.name), file);
    }
    kv.extend(&echo.with_prefix("echo"));
    for (file, a) in &w.arrays {
        write_array(&dir.join(file), a)?;
    }
    fs::write(dir.join(MANIFEST_FILE), kv.to_text())?;
    Ok(())
}

struct Loader<'a> {
    dir: &'a Path,
    manifest: &'a KeyValues,
}

impl Loader<'_> {
    fn path(&self, name: &str) -> Result<PathBuf> {
        let file: String = self.manifest.require(&format!("array.{name}"))?;
        if file.contains('/') || file.contains('\\') || file == ".." {
            return Err(Error::Format(format!("array file {file:?} escapes the dataset directory")));
        }
        let p = self.dir.join(&file);
        if !p.is_file() {
            return Err(Error::Missing(format!("array file {}", p.display())));
        }
        Ok(p)
    }

    fn array(&self, name: &str) -> Result<NamedArray> {
        let mut a = read_array(&self.path(name)?)?;
        a.name = name.to_string();
        Ok(a)
    }

    fn u32s(&self, name: &str) -> Result<Vec<u32>> {
        self.array(name)?.to_u32()
    }

    fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        self.array(name)?.to_matrix_f64()
    }

    fn chains(&self, split: &str, vocab: usize) -> Result<Vec<WordChain>> {
        let groups = self.u32s(&format!("{split}.groups"))?;
        let sizes = self.u32s(&format!("{split}.group_sizes"))?;
        let words = self.u32s(&format!("{split}.words"))?;
        let total_groups: usize = groups.iter().map(|&g| g as usize).sum();
        let total_words: usize = sizes.iter().map(|&s| s as usize).sum();
        if sizes.len() != total_groups || words.len() != total_words {
            return Err(Error::Shape(format!("{split}: group and word counts disagree")));
        }
        if let Some(&w) = words.iter().find(|&&w| w as usize >= vocab) {
            return Err(Error::UnknownWord(w));
        }
        let (mut s, mut wd) = (0, 0);
        Ok(groups
            .iter()
            .map(|&g| {
                let chain: Vec<Vec<WordId>> = sizes[s..s + g as usize]
                    .iter()
                    .map(|&n| {
                        let out = words[wd..wd + n as usize].to_vec();
                        wd += n as usize;
                        out
                    })
                    .collect();
                s += g as usize;
                WordChain { groups: chain }
            })
            .collect())
    }

    fn fmri(&self, split: &str, chains: &[WordChain], cfg: &WorldConfig) -> Result<Vec<FmriRecord>> {
        let m = self.matrix(&format!("{split}.fmri"))?;
        let rows: usize = chains.iter().map(|c| c.groups.len()).sum();
        if m.dim() != (rows, cfg.voxels) {
            return Err(Error::Shape(format!("{split}: fMRI {:?}, expected ({rows}, {})", m.dim(), cfg.voxels)));
        }
        let mut at = 0;
        chains
            .iter()
            .map(|c| {
                let n = c.groups.len();
                let rec = FmriRecord::new(m.slice(s![at..at + n, ..]).to_owned(), cfg.tr_seconds, cfg.region);
                at += n;
                rec
            })
            .collect()
    }
}

pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::Missing(format!("dataset manifest {}", manifest_path.display())));
    }
    let manifest = KeyValues::parse(&fs::read_to_string(&manifest_path)?)?;
    let format: String = manifest.require("format")?;
    if format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown dataset format {format:?}")));
    }
    let world = world_config_from_kv(&manifest.section("world"), WorldConfig::default())?;
    let sizes = sizes_from_kv(&manifest.section("sizes"))?;
    for (key, expected) in [
        ("vocab", world.vocab),
        ("voxels", world.voxels),
        ("frame_width", FRAME_WIDTH),
        ("frames_per_tr", world.frames_per_tr()),
    ] {
        let found: usize = manifest.require(key)?;
        if found != expected {
            return Err(Error::Format(format!("manifest {key}={found} disagrees with world config ({expected})")));
        }
    }
    let ld = Loader { dir, manifest: &manifest };
    let table = |name: &str, dim: usize| -> Result<EmbeddingTable> {
        let m = ld.matrix(name)?;
        if m.dim() != (world.vocab, dim) {
            return Err(Error::Shape(format!("{name} is {:?}, expected ({}, {dim})", m.dim(), world.vocab)));
        }
        EmbeddingTable::from_rows(m)
    };
    let text_table = table("text_table", world.text_dim)?;
    let feature_table = table("feature_table", world.embed_dim)?;

    let f2t_chains = ld.chains("paired_f2t", world.vocab)?;
    let f2t_fmri = ld.fmri("paired_f2t", &f2t_chains, &world)?;
    let paired_f2t = f2t_chains.into_iter().zip(f2t_fmri).map(|(chain, fmri)| F2tRecord { chain, fmri }).collect();

    let t2g_chains = ld.chains("paired_t2g", world.vocab)?;
    let frames = ld.u32s("paired_t2g.frames")?;
    let frame_words = ld.u32s("paired_t2g.frame_words")?;
    let gestures = ld.matrix("paired_t2g.gestures")?;
    let total: usize = frames.iter().map(|&f| f as usize).sum();
    if frames.len() != t2g_chains.len() || frame_words.len() != total || gestures.dim() != (total, FRAME_WIDTH) {
        return Err(Error::Shape("paired_t2g: frame counts disagree".into()));
    }
    if let Some(&w) = frame_words.iter().find(|&&w| w != SILENCE && w as usize >= world.vocab) {
        return Err(Error::UnknownWord(w));
    }
    let mut at = 0;
    let mut paired_t2g = Vec::with_capacity(frames.len());
    for (chain, &f) in t2g_chains.into_iter().zip(&frames) {
        let f = f as usize;
        if f != chain.groups.len() * world.frames_per_tr() {
            return Err(Error::Shape(format!("paired_t2g: {f} frames for {} TRs", chain.groups.len())));
        }
        paired_t2g.push(T2gRecord {
            chain,
            frame_words: frame_words[at..at + f].to_vec(),
            gestures: GestureClip::new(gestures.slice(s![at..at + f, ..]).to_owned())?,
        });
        at += f;
    }

    let truth = ld.chains("unpaired_fmri", world.vocab)?;
    let unpaired = ld.fmri("unpaired_fmri", &truth, &world)?;
    let unpaired_fmri = truth.into_iter().zip(unpaired).map(|(truth, fmri)| UnpairedRecord { fmri, truth }).collect();

    let lengths = ld.u32s("corpus.lengths")?;
    let words = ld.u32s("corpus.words")?;
    if lengths.iter().map(|&l| l as usize).sum::<usize>() != words.len() {
        return Err(Error::Shape("corpus lengths disagree with word count".into()));
    }
    if let Some(&w) = words.iter().find(|&&w| w as usize >= world.vocab) {
        return Err(Error::UnknownWord(w));
    }
    let mut at = 0;
    let corpus = lengths
        .iter()
        .map(|&l| {
            let seq = words[at..at + l as usize].to_vec();
            at += l as usize;
            seq
        })
        .collect();

    let data = Datasets { seed: manifest.require("seed")?, sizes, paired_f2t, paired_t2g, unpaired_fmri, corpus };
    Ok(LoadedDataset { world, text_table, feature_table, data, manifest })
}
