use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ColorMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub image_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub original: PathBuf,
    pub stylized: PathBuf,
    pub color_mode: ColorMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewManifest {
    pub pairs: Vec<ManifestPair>,
    /// Base seed for per-rater presentation order.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ReviewManifest {
    /// Reads the manifest, resolves relative paths and checks that ids are
    /// unique and every file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut manifest: ReviewManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for pair in &mut manifest.pairs {
            for p in [&mut pair.original, &mut pair.stylized] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, pair) in self.pairs.iter().enumerate() {
            crate::evaluation::validate_id(i + 1, "image_id", &pair.image_id)?;
            if !ids.insert(pair.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "manifest lists image {:?} more than once",
                    pair.image_id
                )));
            }
            for p in [&pair.original, &pair.stylized] {
                if !p.is_file() {
                    return Err(Error::invalid(format!(
                        "image {:?}: file {} does not exist",
                        pair.image_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pair(&self, image_id: &str) -> Option<&ManifestPair> {
        self.pairs.iter().find(|p| p.image_id == image_id)
    }

    /// Seed for one rater's order: FNV-1a of the rater id mixed with the
    /// manifest seed.
    pub fn rater_seed(&self, rater_id: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in rater_id.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^ self.seed.unwrap_or(0)
    }

    /// Manifest indices in the order shown to `rater_id`.
    pub fn order_for(&self, rater_id: &str) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.rater_seed(rater_id)));
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize, seed: Option<u64>) -> ReviewManifest {
        ReviewManifest {
            pairs: (0..n)
                .map(|i| ManifestPair {
                    image_id: format!("img{i}"),
                    original: format!("o{i}.png").into(),
                    stylized: format!("s{i}.png").into(),
                    color_mode: ColorMode::Gray,
                })
                .collect(),
            seed,
        }
    }

    #[test]
    fn order_is_a_seeded_permutation() {
        let m = manifest(30, Some(7));
        let a = m.order_for("r1");
        assert_eq!(a, m.order_for("r1"));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..30).collect::<Vec<_>>());
        assert_ne!(a, m.order_for("r2"));
        assert_ne!(a, manifest(30, Some(8)).order_for("r1"));
    }

    #[test]
    fn load_resolves_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("o.png"), b"x").unwrap();
        std::fs::write(dir.path().join("s.png"), b"x").unwrap();
        let json = r#"{"pairs":[{"image_id":"a","original":"o.png","stylized":"s.png","color_mode":"red"}]}"#;
        let path = dir.path().join("m.json");
        std::fs::write(&path, json).unwrap();
        let m = ReviewManifest::load(&path).unwrap();
        assert_eq!(m.pairs[0].original, dir.path().join("o.png"));
        assert_eq!(m.seed, None);

        let dup = r#"{"pairs":[{"image_id":"a","original":"o.png","stylized":"s.png","color_mode":"red"},
                              {"image_id":"a","original":"o.png","stylized":"s.png","color_mode":"red"}]}"#;
        std::fs::write(&path, dup).unwrap();
        assert!(ReviewManifest::load(&path).is_err());

        let missing = r#"{"pairs":[{"image_id":"a","original":"nope.png","stylized":"s.png","color_mode":"red"}]}"#;
        std::fs::write(&path, missing).unwrap();
        assert!(ReviewManifest::load(&path).is_err());
    }
}
