//! Procedural scenes, episode sampling, oracle statistics, splits and
//! persistence.

pub mod episode;
pub mod io;
pub mod sample;
pub mod scenegen;

pub use episode::{EpisodeSpec, SoundPlacement};
pub use io::{
    generate_dataset, generate_scenes, read_dataset, read_manifest, read_scene, scene_id,
    write_dataset, write_scene, write_split, Dataset, DatasetConfig, Manifest, SplitConfig,
    SplitName,
};
pub use sample::{oracle_controller, sample_episode, OraclePlanner};
pub use scenegen::{gen_scene, SizeClass};
