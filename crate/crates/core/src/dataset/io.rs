//! Dataset generation and the on-disk layout:
//! `manifest.json`, `scenes/<id>.json`, `<split>.jsonl`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::EpisodeSpec;
use super::sample::{sample_episode, OraclePlanner};
use super::scenegen::{gen_scene, SizeClass};
use crate::acoustics::SoundBank;
use crate::error::{Error, Result};
use crate::geometry::{ActionKind, Scene, ScenePlan};
use crate::seed::derive_seed;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split '{s}' (train, val or test)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub name: SplitName,
    pub scene_ids: Vec<String>,
    /// Half-open range of sound variants.
    pub variants: [u32; 2],
    pub episodes: usize,
}

impl SplitConfig {
    pub fn variant_range(&self) -> Range<u32> {
        self.variants[0]..self.variants[1]
    }
}

/// Knobs for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub bank: SoundBank,
    /// Scenes per split, in train/val/test order.
    pub scenes: [usize; 3],
    pub episodes: [usize; 3],
    /// Variants per split; ranges are laid out back to back.
    pub variants: [u32; 3],
    pub distractors: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            bank: SoundBank::default(),
            scenes: [40, 5, 10],
            episodes: [2000, 200, 400],
            variants: [6, 2, 4],
            distractors: true,
        }
    }
}

impl DatasetConfig {
    pub fn splits(&self) -> Vec<SplitConfig> {
        let mut scene_off = 0;
        let mut var_off = 0;
        SplitName::ALL
            .iter()
            .enumerate()
            .map(|(k, &name)| {
                let ids = (scene_off..scene_off + self.scenes[k])
                    .map(scene_id)
                    .collect();
                let v = [var_off, var_off + self.variants[k]];
                scene_off += self.scenes[k];
                var_off += self.variants[k];
                SplitConfig {
                    name,
                    scene_ids: ids,
                    variants: v,
                    episodes: self.episodes[k],
                }
            })
            .collect()
    }
}

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:03}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub master_seed: u64,
    pub bank: SoundBank,
    pub splits: Vec<SplitConfig>,
    /// Action frequencies of oracle train episodes, ordered
    /// Stop, MoveForward, TurnLeft, TurnRight.
    pub random_action_distribution: [f64; 4],
    pub distractors: bool,
}

impl Manifest {
    pub fn split(&self, name: SplitName) -> Result<&SplitConfig> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("manifest has no {name} split")))
    }

    /// Scene sets and variant ranges must be pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        for (i, a) in self.splits.iter().enumerate() {
            for b in &self.splits[i + 1..] {
                let sa: BTreeSet<&String> = a.scene_ids.iter().collect();
                if let Some(shared) = b.scene_ids.iter().find(|s| sa.contains(s)) {
                    return Err(Error::SplitOverlap(format!(
                        "scene {shared} is in both {} and {}",
                        a.name, b.name
                    )));
                }
                let (ra, rb) = (a.variant_range(), b.variant_range());
                if ra.start < rb.end && rb.start < ra.end {
                    return Err(Error::SplitOverlap(format!(
                        "variant ranges {ra:?} ({}) and {rb:?} ({}) overlap",
                        a.name, b.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scene for index `i` under a master seed; sizes alternate small/large.
pub fn scene_for_index(master_seed: u64, i: usize) -> Result<ScenePlan> {
    let size = if i.is_multiple_of(2) {
        SizeClass::Small
    } else {
        SizeClass::Large
    };
    gen_scene(
        &scene_id(i),
        derive_seed(master_seed, "scene", i as u64),
        size,
    )
}

pub fn generate_scenes(master_seed: u64, count: usize) -> Result<Vec<ScenePlan>> {
    (0..count)
        .into_par_iter()
        .map(|i| scene_for_index(master_seed, i))
        .collect()
}

/// Everything loaded from a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub scenes: BTreeMap<String, Arc<Scene>>,
    pub episodes: BTreeMap<SplitName, Vec<EpisodeSpec>>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &[EpisodeSpec] {
        self.episodes.get(&name).map_or(&[], Vec::as_slice)
    }

    pub fn scene(&self, id: &str) -> Result<&Arc<Scene>> {
        self.scenes.get(id).ok_or_else(|| Error::InvalidScene {
            id: id.to_string(),
            reason: "not part of the dataset".into(),
        })
    }
}

/// Generates the whole dataset in memory; a pure function of the config.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    let splits = cfg.splits();
    let total_scenes: usize = cfg.scenes.iter().sum();
    let plans = generate_scenes(cfg.master_seed, total_scenes)?;
    let mut scenes = BTreeMap::new();
    let mut planners = BTreeMap::new();
    for plan in plans {
        let scene = Arc::new(Scene::new(plan)?);
        planners.insert(scene.plan.id.clone(), OraclePlanner::new(&scene));
        scenes.insert(scene.plan.id.clone(), scene);
    }
    let mut episodes = BTreeMap::new();
    let mut counts = [0usize; 4];
    for split in &splits {
        if split.episodes > 0 && split.scene_ids.is_empty() {
            return Err(Error::Config(format!(
                "split {} needs scenes for its episodes",
                split.name
            )));
        }
        let sampled: Vec<(EpisodeSpec, Vec<ActionKind>)> = (0..split.episodes)
            .into_par_iter()
            .map(|j| {
                let sid = &split.scene_ids[j % split.scene_ids.len()];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    cfg.master_seed,
                    split.name.as_str(),
                    j as u64,
                ));
                sample_episode(
                    &mut rng,
                    &scenes[sid],
                    &planners[sid],
                    &cfg.bank,
                    split.variant_range(),
                    &format!("{}_{j:05}", split.name),
                    cfg.distractors,
                )
            })
            .collect::<Result<_>>()?;
        if split.name == SplitName::Train {
            for (_, actions) in &sampled {
                for a in actions {
                    counts[a.index()] += 1;
                }
            }
        }
        episodes.insert(split.name, sampled.into_iter().map(|(s, _)| s).collect());
    }
    let total: usize = counts.iter().sum();
    let random_action_distribution = if total == 0 {
        [0.0, 0.7, 0.15, 0.15]
    } else {
        counts.map(|c| c as f64 / total as f64)
    };
    Ok(Dataset {
        root: PathBuf::new(),
        manifest: Manifest {
            version: MANIFEST_VERSION,
            master_seed: cfg.master_seed,
            bank: cfg.bank,
            splits,
            random_action_distribution,
            distractors: cfg.distractors,
        },
        scenes,
        episodes,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_scene(dir: &Path, plan: &ScenePlan) -> Result<()> {
    let path = dir.join(format!("{}.json", plan.id));
    write_file(&path, serde_json::to_string_pretty(plan)?.as_bytes())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let plan: ScenePlan = serde_json::from_str(&text).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    Scene::new(plan)
}

/// Writes manifest, scenes and every split file.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    let scene_dir = dir.join("scenes");
    fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
    write_file(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&data.manifest)?.as_bytes(),
    )?;
    for scene in data.scenes.values() {
        write_scene(&scene_dir, &scene.plan)?;
    }
    for name in SplitName::ALL {
        write_split(&dir.join(format!("{name}.jsonl")), data.split(name))?;
    }
    Ok(())
}

pub fn write_split(path: &Path, episodes: &[EpisodeSpec]) -> Result<()> {
    let mut buf = Vec::new();
    for e in episodes {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Dataset {
        path: path.clone(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    m.check_disjoint()?;
    let sum: f64 = m.random_action_distribution.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || m.random_action_distribution.iter().any(|p| *p < 0.0) {
        return Err(Error::Dataset {
            path,
            line: 0,
            reason: format!(
                "random_action_distribution {:?} is not a distribution",
                m.random_action_distribution
            ),
        });
    }
    Ok(m)
}

/// Loads the manifest, the requested splits and the scenes they use,
/// validating every episode.
pub fn read_dataset(dir: &Path, splits: &[SplitName]) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut scenes: BTreeMap<String, Arc<Scene>> = BTreeMap::new();
    let mut episodes = BTreeMap::new();
    for &name in splits {
        let split = manifest.split(name)?.clone();
        let path = dir.join(format!("{name}.jsonl"));
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let allowed: BTreeSet<&String> = split.scene_ids.iter().collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Dataset {
                path: path.clone(),
                line: i + 1,
                reason,
            };
            let spec: EpisodeSpec = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if !allowed.contains(&spec.scene_id) {
                return Err(bad(format!(
                    "scene {} does not belong to the {name} split",
                    spec.scene_id
                )));
            }
            if !seen.insert(spec.id.clone()) {
                return Err(bad(format!("duplicate episode id {}", spec.id)));
            }
            let vr = split.variant_range();
            let mut variants = vec![spec.goal.sound_variant];
            variants.extend(spec.distractor.map(|d| d.sound_variant));
            if let Some(v) = variants.iter().find(|v| !vr.contains(v)) {
                return Err(bad(format!(
                    "sound variant {v} outside the split range {vr:?}"
                )));
            }
            if !scenes.contains_key(&spec.scene_id) {
                let sp = dir.join("scenes").join(format!("{}.json", spec.scene_id));
                let scene = read_scene(&sp).map_err(|e| bad(e.to_string()))?;
                scenes.insert(spec.scene_id.clone(), Arc::new(scene));
            }
            spec.validate(&manifest.bank, &scenes[&spec.scene_id])
                .map_err(|e| bad(e.to_string()))?;
            out.push(spec);
        }
        episodes.insert(name, out);
    }
    Ok(Dataset {
        root: dir.to_path_buf(),
        manifest,
        scenes,
        episodes,
    })
}
