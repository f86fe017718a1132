use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synthdata::WorldConfig;

/// Ordered `key = value` lines. Later assignments to a key replace earlier
/// ones in place.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses lines of `key = value`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Format(format!("line {}: bad key {key:?}", i + 1)));
            }
            out.set(key, v.trim());
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Format(format!("cannot parse {key} = {v:?}"))))
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?.ok_or_else(|| Error::Missing(format!("key {key:?}")))
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn extend(&mut self, other: &KeyValues) {
        for (k, v) in &other.pairs {
            self.set(k, v);
        }
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let lead = format!("{prefix}.");
        let pairs = self
            .pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&lead).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        KeyValues { pairs }
    }

    pub fn with_prefix(&self, prefix: &str) -> KeyValues {
        let pairs = self.pairs.iter().map(|(k, v)| (format!("{prefix}.{k}"), v.clone())).collect();
        KeyValues { pairs }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn world_config_to_kv(c: &WorldConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("seed", c.seed);
    kv.set("vocab", c.vocab);
    kv.set("latent_dim", c.latent_dim);
    kv.set("text_dim", c.text_dim);
    kv.set("embed_dim", c.embed_dim);
    kv.set("voxels", c.voxels);
    kv.set("region", c.region);
    kv.set("full_scale", c.full_scale);
    kv.set("successors", c.successors);
    kv.set("words_per_tr", c.words_per_tr);
    kv.set("rate_gain", c.rate_gain);
    kv.set("readout_scale", c.readout_scale);
    kv.set("beat_amplitude", c.beat_amplitude);
    kv.set("gesture_noise", c.gesture_noise);
    kv.set("fmri_noise", c.fmri_noise);
    kv.set("fps", c.fps);
    kv.set("tr_seconds", c.tr_seconds);
    kv
}

/// Starts from `base` and applies every key present in `kv`.
pub fn world_config_from_kv(kv: &KeyValues, base: WorldConfig) -> Result<WorldConfig> {
    let mut c = base;
    kv.apply("seed", &mut c.seed)?;
    kv.apply("vocab", &mut c.vocab)?;
    kv.apply("latent_dim", &mut c.latent_dim)?;
    kv.apply("text_dim", &mut c.text_dim)?;
    kv.apply("embed_dim", &mut c.embed_dim)?;
    kv.apply("voxels", &mut c.voxels)?;
    kv.apply("region", &mut c.region)?;
    kv.apply("full_scale", &mut c.full_scale)?;
    kv.apply("successors", &mut c.successors)?;
    kv.apply("words_per_tr", &mut c.words_per_tr)?;
    kv.apply("rate_gain", &mut c.rate_gain)?;
    kv.apply("readout_scale", &mut c.readout_scale)?;
    kv.apply("beat_amplitude", &mut c.beat_amplitude)?;
    kv.apply("gesture_noise", &mut c.gesture_noise)?;
    kv.apply("fmri_noise", &mut c.fmri_noise)?;
    kv.apply("fps", &mut c.fps)?;
    kv.apply("tr_seconds", &mut c.tr_seconds)?;
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f2t::Region;

    #[test]
    fn parse_and_override() {
        let kv = KeyValues::parse("# comment\n a = 1\n\nb=x y\na=2\n").unwrap();
        assert_eq!(kv.get("a"), Some("2"));
        assert_eq!(kv.get("b"), Some("x y"));
        assert_eq!(kv.to_text(), "a=2\nb=x y\n");
        assert_eq!(kv.require::<u32>("a").unwrap(), 2);
        assert!(kv.require::<u32>("b").is_err());
        assert!(matches!(kv.require::<u32>("c"), Err(Error::Missing(_))));
        assert!(KeyValues::parse("novalue").is_err());
        assert!(KeyValues::parse("two words=1").is_err());
    }

    #[test]
    fn sections() {
        let kv = KeyValues::parse("t2g.steps=5\nt2g.lr=0.1\nf2g.steps=7\n").unwrap();
        let s = kv.section("t2g");
        assert_eq!(s.to_text(), "steps=5\nlr=0.1\n");
        assert_eq!(s.with_prefix("t2g").to_text(), "t2g.steps=5\nt2g.lr=0.1\n");
    }

    #[test]
    fn world_config_round_trips() {
        let c = WorldConfig {
            seed: 9,
            region: Region::SpeechAuditory,
            fmri_noise: 0.1 + 0.2,
            full_scale: true,
            ..WorldConfig::default()
        };
        let kv = world_config_to_kv(&c);
        let back = world_config_from_kv(&KeyValues::parse(&kv.to_text()).unwrap(), WorldConfig::default()).unwrap();
        assert_eq!(back, c);
        let bad = KeyValues::parse("vocab=0").unwrap();
        assert!(world_config_from_kv(&bad, WorldConfig::default()).is_err());
    }
}
