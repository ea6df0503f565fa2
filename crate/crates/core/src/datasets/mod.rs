//! Corpus ingestion (MIR-1K and DSD100 directory layouts) and cached
//! spectrogram preparation.

mod prepare;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, AudioClip};
use crate::error::{Error, Result};

pub use prepare::{prepare_clip, PreparedClip};

/// MIR-1K singers whose clips form the training split.
pub const MIR1K_TRAIN_SINGERS: [&str; 2] = ["abjones", "amy"];

/// Stem names of the four-source task, in source order.
pub const DSD100_STEMS: [&str; 4] = ["bass", "drums", "other", "vocals"];

/// Source names of the two-source task, in source order.
pub const VOICE_SOURCES: [&str; 2] = ["voice", "accompaniment"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which sources are separated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Voice versus everything else.
    #[serde(rename = "voice")]
    Voice,
    /// Bass, drums, other and vocals.
    #[serde(rename = "4source")]
    FourSource,
}

impl Task {
    pub fn source_names(&self) -> Vec<String> {
        match self {
            Task::Voice => VOICE_SOURCES.iter().map(|s| s.to_string()).collect(),
            Task::FourSource => DSD100_STEMS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn num_sources(&self) -> usize {
        match self {
            Task::Voice => 2,
            Task::FourSource => 4,
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voice" => Ok(Task::Voice),
            "4source" | "four-source" => Ok(Task::FourSource),
            other => Err(Error::InvalidArgument(format!(
                "unknown task `{other}` (expected `voice` or `4source`)"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Voice => "voice",
            Task::FourSource => "4source",
        })
    }
}

/// Stereo channel carrying the voice in MIR-1K files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Left,
    #[default]
    Right,
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Channel::Left),
            "right" => Ok(Channel::Right),
            other => Err(Error::InvalidArgument(format!(
                "unknown channel `{other}` (expected `left` or `right`)"
            ))),
        }
    }
}

/// One track with its sources and mixture, all at the file sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipRecord {
    pub id: String,
    pub paths: Vec<PathBuf>,
    pub source_names: Vec<String>,
    pub sources: Vec<AudioClip>,
    pub mixture: AudioClip,
}

impl ClipRecord {
    /// Builds a record whose mixture is the sample-wise sum of `sources`,
    /// accumulated in source order.
    pub fn from_sources(
        id: impl Into<String>,
        paths: Vec<PathBuf>,
        source_names: Vec<String>,
        sources: Vec<AudioClip>,
    ) -> Result<Self> {
        let id = id.into();
        let first = sources
            .first()
            .ok_or_else(|| Error::Dataset(format!("{id}: no sources")))?;
        let (len, rate) = (first.len(), first.sample_rate);
        if source_names.len() != sources.len() {
            return Err(Error::Dataset(format!(
                "{id}: {} names for {} sources",
                source_names.len(),
                sources.len()
            )));
        }
        for (name, s) in source_names.iter().zip(&sources) {
            if s.len() != len || s.sample_rate != rate {
                return Err(Error::Dataset(format!(
                    "{id}: source `{name}` has {} samples at {} Hz, expected {len} at {rate} Hz",
                    s.len(),
                    s.sample_rate
                )));
            }
        }
        let mut mix = vec![0.0f32; len];
        for s in &sources {
            for (m, &v) in mix.iter_mut().zip(&s.samples) {
                *m += v;
            }
        }
        Ok(ClipRecord {
            mixture: AudioClip::new(mix, rate)?,
            id,
            paths,
            source_names,
            sources,
        })
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("wav"))
            .unwrap_or(false);
        if path.is_file() && is_wav {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// True when the clip id belongs to the MIR-1K training singers.
pub fn mir1k_is_train(id: &str) -> bool {
    let singer = id.split('_').next().unwrap_or(id);
    MIR1K_TRAIN_SINGERS.contains(&singer)
}

/// Loads MIR-1K-style stereo clips: one channel voice, the other
/// accompaniment. Both are halved, so the mixture (their sum) is the halved
/// channel sum. Non-stereo files are skipped with a warning.
///
/// `root` may hold the WAVs directly or in a `Wavfile` subdirectory.
pub fn load_mir1k(root: impl AsRef<Path>, split: Split, voice_channel: Channel) -> Result<Vec<ClipRecord>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", root.display())));
    }
    let nested = root.join("Wavfile");
    let dir = if nested.is_dir() { nested } else { root.to_path_buf() };
    let files = wav_files(&dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no WAV files in {}", dir.display())));
    }
    let mut out = Vec::new();
    for path in files {
        let id = file_stem(&path);
        if mir1k_is_train(&id) != (split == Split::Train) {
            continue;
        }
        let wav = read_wav(&path)?;
        if wav.num_channels() != 2 {
            warn!("skipping {}: expected 2 channels, found {}", path.display(), wav.num_channels());
            continue;
        }
        let (v, a) = match voice_channel {
            Channel::Left => (0, 1),
            Channel::Right => (1, 0),
        };
        let sources = vec![wav.channel(v)?.scaled(0.5), wav.channel(a)?.scaled(0.5)];
        out.push(ClipRecord::from_sources(id, vec![path], Task::Voice.source_names(), sources)?);
    }
    Ok(out)
}

/// Loads DSD100-style songs from `Sources/{Dev,Test}/<song>/<stem>.wav`
/// (Dev is the training split). Stems are averaged to mono; for the voice
/// task the non-vocal stems are summed into an accompaniment. The mixture is
/// rebuilt as the sum of the returned sources.
pub fn load_dsd100(root: impl AsRef<Path>, split: Split, task: Task) -> Result<Vec<ClipRecord>> {
    let root = root.as_ref();
    let split_dir = root.join("Sources").join(match split {
        Split::Train => "Dev",
        Split::Test => "Test",
    });
    if !split_dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", split_dir.display())));
    }
    let mut songs: Vec<PathBuf> = fs::read_dir(&split_dir)
        .map_err(|e| Error::io(&split_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    songs.sort();
    if songs.is_empty() {
        return Err(Error::Dataset(format!("no songs in {}", split_dir.display())));
    }
    songs.iter().map(|song| load_dsd100_song(song, task)).collect()
}

fn load_dsd100_song(song_dir: &Path, task: Task) -> Result<ClipRecord> {
    let song = song_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut paths = Vec::new();
    let mut stems = Vec::new();
    for stem in DSD100_STEMS {
        let path = song_dir.join(format!("{stem}.wav"));
        if !path.is_file() {
            return Err(Error::Dataset(format!("song `{song}` is missing stem `{stem}`")));
        }
        let wav = read_wav(&path)?;
        stems.push(wav.to_mono()?);
        paths.push(path);
    }
    let sources = match task {
        Task::FourSource => stems,
        Task::Voice => {
            let vocals = stems.pop().expect("four stems");
            let len = vocals.len();
            if let Some(s) = stems.iter().find(|s| s.len() != len) {
                return Err(Error::Dataset(format!(
                    "song `{song}`: stem lengths differ ({} vs {len})",
                    s.len()
                )));
            }
            let mut acc = vec![0.0f32; len];
            for s in &stems {
                for (a, &v) in acc.iter_mut().zip(&s.samples) {
                    *a += v;
                }
            }
            let rate = vocals.sample_rate;
            vec![vocals, AudioClip::new(acc, rate)?]
        }
    };
    ClipRecord::from_sources(song, paths, task.source_names(), sources)
}
