//! The three input modalities and a total container keyed by them.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Text,
    Audio,
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Visual];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }

    pub fn from_str(s: &str) -> Option<Modality> {
        match s {
            "text" => Some(Modality::Text),
            "audio" => Some(Modality::Audio),
            "visual" => Some(Modality::Visual),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per modality; being total by construction, it encodes the
/// "all three modalities present" precondition in the type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PerModality<V> {
    pub text: V,
    pub audio: V,
    pub visual: V,
}

impl<V> PerModality<V> {
    pub fn new(text: V, audio: V, visual: V) -> Self {
        PerModality {
            text,
            audio,
            visual,
        }
    }

    pub fn splat(v: V) -> Self
    where
        V: Clone,
    {
        PerModality {
            text: v.clone(),
            audio: v.clone(),
            visual: v,
        }
    }

    pub fn get(&self, m: Modality) -> &V {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
        }
    }

    pub fn get_mut(&mut self, m: Modality) -> &mut V {
        match m {
            Modality::Text => &mut self.text,
            Modality::Audio => &mut self.audio,
            Modality::Visual => &mut self.visual,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Modality, &V) -> U) -> PerModality<U> {
        PerModality {
            text: f(Modality::Text, &self.text),
            audio: f(Modality::Audio, &self.audio),
            visual: f(Modality::Visual, &self.visual),
        }
    }

    pub fn try_map<U, E>(
        &self,
        mut f: impl FnMut(Modality, &V) -> Result<U, E>,
    ) -> Result<PerModality<U>, E> {
        Ok(PerModality {
            text: f(Modality::Text, &self.text)?,
            audio: f(Modality::Audio, &self.audio)?,
            visual: f(Modality::Visual, &self.visual)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Modality, &V)> {
        [
            (Modality::Text, &self.text),
            (Modality::Audio, &self.audio),
            (Modality::Visual, &self.visual),
        ]
        .into_iter()
    }
}
