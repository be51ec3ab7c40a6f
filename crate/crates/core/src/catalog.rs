//! Class catalog: contiguous 1-based class indices paired with names.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ClassId {
    fn from(v: u32) -> Self {
        ClassId(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
    by_name: HashMap<String, ClassId>,
}

impl ClassCatalog {
    /// Builds a catalog from names listed in index order (first name is index 1).
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidCatalog("catalog has no entries".into()));
        }
        let mut by_name = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::InvalidCatalog(format!(
                    "entry {} has an empty name",
                    i + 1
                )));
            }
            if by_name
                .insert(name.clone(), ClassId(i as u32 + 1))
                .is_some()
            {
                return Err(Error::InvalidCatalog(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(Self { names, by_name })
    }

    /// Builds a catalog from explicit `(index, name)` pairs. Indices must be
    /// unique and contiguous from 1, in any order.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, S)>,
        S: Into<String>,
    {
        let mut entries: Vec<(u32, String)> =
            entries.into_iter().map(|(i, s)| (i, s.into())).collect();
        entries.sort_by_key(|(i, _)| *i);
        for (pos, (index, _)) in entries.iter().enumerate() {
            if *index != pos as u32 + 1 {
                return Err(Error::InvalidCatalog(format!(
                    "indices must be unique and contiguous from 1; found {index} at position {}",
                    pos + 1
                )));
            }
        }
        Self::from_names(entries.into_iter().map(|(_, n)| n))
    }

    /// Parses `index<TAB>name` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (index, name) = line.split_once('\t').ok_or_else(|| {
                Error::InvalidCatalog(format!("line {}: expected index<TAB>name", lineno + 1))
            })?;
            let index: u32 = index.trim().parse().map_err(|_| {
                Error::InvalidCatalog(format!("line {}: bad index {index:?}", lineno + 1))
            })?;
            entries.push((index, name.trim().to_string()));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The 101-class UCF101 action catalog, in its canonical index order.
    pub fn ucf101() -> Self {
        Self::from_names(UCF101_NAMES.iter().copied()).expect("builtin catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id.0 >= 1 && (id.0 as usize) <= self.names.len()
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        if !self.contains(id) {
            return None;
        }
        self.names.get(id.0 as usize - 1).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (1..=self.names.len() as u32).map(ClassId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, &str)> + '_ {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (ClassId(i as u32 + 1), n.as_str()))
    }

    /// Serializes to the `index<TAB>name` text form read by [`ClassCatalog::parse`].
    pub fn to_text(&self) -> String {
        self.iter().map(|(id, n)| format!("{id}\t{n}\n")).collect()
    }
}

const UCF101_NAMES: [&str; 101] = [
    "Apply Eye Makeup",
    "Apply Lipstick",
    "Archery",
    "Baby Crawling",
    "Balance Beam",
    "Band Marching",
    "Baseball Pitch",
    "Basketball",
    "Basketball Dunk",
    "Bench Press",
    "Biking",
    "Billiards",
    "Blow Dry Hair",
    "Blowing Candles",
    "Body Weight Squats",
    "Bowling",
    "Boxing Punching Bag",
    "Boxing Speed Bag",
    "Breast Stroke",
    "Brushing Teeth",
    "Clean And Jerk",
    "Cliff Diving",
    "Cricket Bowling",
    "Cricket Shot",
    "Cutting In Kitchen",
    "Diving",
    "Drumming",
    "Fencing",
    "Field Hockey Penalty",
    "Floor Gymnastics",
    "Frisbee Catch",
    "Front Crawl",
    "Golf Swing",
    "Haircut",
    "Hammering",
    "Hammer Throw",
    "Handstand Pushups",
    "Handstand Walking",
    "Head Massage",
    "High Jump",
    "Horse Race",
    "Horse Riding",
    "Hula Hoop",
    "Ice Dancing",
    "Javelin Throw",
    "Juggling Balls",
    "Jumping Jack",
    "Jump Rope",
    "Kayaking",
    "Knitting",
    "Long Jump",
    "Lunges",
    "Military Parade",
    "Mixing",
    "Mopping Floor",
    "Nunchucks",
    "Parallel Bars",
    "Pizza Tossing",
    "Playing Cello",
    "Playing Daf",
    "Playing Dhol",
    "Playing Flute",
    "Playing Guitar",
    "Playing Piano",
    "Playing Sitar",
    "Playing Tabla",
    "Playing Violin",
    "Pole Vault",
    "Pommel Horse",
    "Pull Ups",
    "Punch",
    "Push Ups",
    "Rafting",
    "Rock Climbing Indoor",
    "Rope Climbing",
    "Rowing",
    "Salsa Spin",
    "Shaving Beard",
    "Shotput",
    "Skate Boarding",
    "Skiing",
    "Ski Jet",
    "Sky Diving",
    "Soccer Juggling",
    "Soccer Penalty",
    "Still Rings",
    "Sumo Wrestling",
    "Surfing",
    "Swing",
    "Table Tennis Shot",
    "Tai Chi",
    "Tennis Swing",
    "Throw Discus",
    "Trampoline Jumping",
    "Typing",
    "Uneven Bars",
    "Volleyball Spiking",
    "Walking With Dog",
    "Wall Pushups",
    "Writing On Board",
    "Yo Yo",
];
