//! Arrival orders for replaying a generated session in batches. Every
//! order keeps each stream internally sorted; only the relative order of
//! the streams changes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, Generated, STREAM_INTERLEAVE};
use crate::geometry::TransformState;
use crate::sync::{CalibrationEvent, GazeSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interleaving {
    /// Both streams merged by timestamp.
    Sorted,
    /// The whole gaze stream before any transform.
    GazeFirst,
    /// The whole transform stream before any gaze.
    TransformFirst,
    /// Random chunk sizes, randomly merged.
    SeededShuffle,
}

impl Interleaving {
    pub const ALL: [Interleaving; 4] = [
        Interleaving::Sorted,
        Interleaving::GazeFirst,
        Interleaving::TransformFirst,
        Interleaving::SeededShuffle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Interleaving::Sorted => "sorted",
            Interleaving::GazeFirst => "gaze-first",
            Interleaving::TransformFirst => "transform-first",
            Interleaving::SeededShuffle => "seeded-shuffle",
        }
    }
}

impl fmt::Display for Interleaving {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Interleaving {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Interleaving::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown interleaving {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Gaze(Vec<GazeSample>),
    Transform(Vec<TransformState>),
    Events(Vec<CalibrationEvent>),
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Gaze(v) => v.len(),
            Batch::Transform(v) => v.len(),
            Batch::Events(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn chunks<T: Clone>(items: &[T], size: usize) -> impl Iterator<Item = Vec<T>> + '_ {
    items.chunks(size.max(1)).map(<[T]>::to_vec)
}

fn random_chunks<T: Clone>(items: &[T], max: usize, rng: &mut impl Rng) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut rest = items;
    while !rest.is_empty() {
        let n = rng.random_range(1..=max.max(1)).min(rest.len());
        out.push(rest[..n].to_vec());
        rest = &rest[n..];
    }
    out
}

/// Splits `data` into batches of at most `max_batch` events. `seed` is
/// used only by [`Interleaving::SeededShuffle`].
pub fn interleave(
    data: &Generated,
    order: Interleaving,
    max_batch: usize,
    seed: u64,
) -> Vec<Batch> {
    let gaze = || chunks(&data.gaze, max_batch).map(Batch::Gaze);
    let transforms = || chunks(&data.transforms, max_batch).map(Batch::Transform);
    let events = || chunks(&data.events, max_batch).map(Batch::Events);
    match order {
        Interleaving::GazeFirst => gaze().chain(events()).chain(transforms()).collect(),
        Interleaving::TransformFirst => transforms().chain(events()).chain(gaze()).collect(),
        Interleaving::Sorted => sorted(data, max_batch.max(1)),
        Interleaving::SeededShuffle => {
            let mut rng = stream_rng(seed, STREAM_INTERLEAVE);
            let mut queues: Vec<std::collections::VecDeque<Batch>> = vec![
                random_chunks(&data.gaze, max_batch, &mut rng)
                    .into_iter()
                    .map(Batch::Gaze)
                    .collect(),
                random_chunks(&data.transforms, max_batch, &mut rng)
                    .into_iter()
                    .map(Batch::Transform)
                    .collect(),
                random_chunks(&data.events, max_batch, &mut rng)
                    .into_iter()
                    .map(Batch::Events)
                    .collect(),
            ];
            let mut out = Vec::new();
            loop {
                let live: Vec<usize> = (0..queues.len())
                    .filter(|&i| !queues[i].is_empty())
                    .collect();
                if live.is_empty() {
                    break out;
                }
                let pick = live[rng.random_range(0..live.len())];
                out.extend(queues[pick].pop_front());
            }
        }
    }
}

fn sorted(data: &Generated, max_batch: usize) -> Vec<Batch> {
    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Gaze,
        Transform,
        Event,
    }
    let mut stamps: Vec<(i64, u8, Kind, usize)> = Vec::new();
    stamps.extend(
        data.transforms
            .iter()
            .enumerate()
            .map(|(i, s)| (s.t, 0, Kind::Transform, i)),
    );
    stamps.extend(
        data.events
            .iter()
            .enumerate()
            .map(|(i, e)| (e.t, 1, Kind::Event, i)),
    );
    stamps.extend(
        data.gaze
            .iter()
            .enumerate()
            .map(|(i, g)| (g.t, 2, Kind::Gaze, i)),
    );
    stamps.sort_by_key(|&(t, rank, _, i)| (t, rank, i));

    let mut out: Vec<Batch> = Vec::new();
    for (_, _, kind, i) in stamps {
        match (out.last_mut(), kind) {
            (Some(Batch::Gaze(v)), Kind::Gaze) if v.len() < max_batch => {
                v.push(data.gaze[i].clone())
            }
            (Some(Batch::Transform(v)), Kind::Transform) if v.len() < max_batch => {
                v.push(data.transforms[i])
            }
            (Some(Batch::Events(v)), Kind::Event) if v.len() < max_batch => v.push(data.events[i]),
            (_, Kind::Gaze) => out.push(Batch::Gaze(vec![data.gaze[i].clone()])),
            (_, Kind::Transform) => out.push(Batch::Transform(vec![data.transforms[i]])),
            (_, Kind::Event) => out.push(Batch::Events(vec![data.events[i]])),
        }
    }
    out
}
