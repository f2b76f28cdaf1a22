//! Built-in token vocabularies. Unknown tokens are rejected at parse time.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident, $label:literal, [$($variant:ident => $token:literal),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub fn parse(token: &str) -> Result<Self> {
                match token {
                    $($token => Ok($name::$variant),)+
                    other => Err(Error::Vocabulary {
                        vocabulary: $label,
                        token: other.to_string(),
                    }),
                }
            }

            /// Position within the vocabulary.
            pub fn ordinal(self) -> usize {
                self as usize
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

vocabulary!(Weather, "weather", [Sunny => "sunny", Rain => "rain", Fog => "fog", Snow => "snow"]);
vocabulary!(TimeOfDay, "time_of_day", [Day => "day", Dusk => "dusk", Night => "night"]);
vocabulary!(Category, "category", [
    Car => "car",
    Bus => "bus",
    Truck => "truck",
    ConstructionVehicle => "construction_vehicle",
    Pedestrian => "pedestrian",
    Trailer => "trailer",
]);
vocabulary!(Color, "color", [
    White => "white",
    Black => "black",
    Red => "red",
    Blue => "blue",
    Silver => "silver",
    Yellow => "yellow",
    Green => "green",
]);
vocabulary!(Style, "style", [
    Clean => "clean",
    Dirty => "dirty",
    Modern => "modern",
    Boxy => "boxy",
    Long => "long",
]);

/// Index of a descriptive token in the text basis (categories, then colors, then styles).
pub fn category_basis(c: Category) -> usize {
    c.ordinal()
}

pub fn color_basis(c: Color) -> usize {
    Category::ALL.len() + c.ordinal()
}

pub fn style_basis(s: Style) -> usize {
    Category::ALL.len() + Color::ALL.len() + s.ordinal()
}

pub const TEXT_VOCABULARY_SIZE: usize = 6 + 7 + 5;

impl Color {
    /// Base paint in 8-bit sRGB, before lighting.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::White => [235, 235, 235],
            Color::Black => [30, 30, 34],
            Color::Red => [200, 30, 35],
            Color::Blue => [30, 60, 200],
            Color::Silver => [165, 170, 178],
            Color::Yellow => [230, 200, 30],
            Color::Green => [35, 160, 60],
        }
    }

    /// Color wheel used by the recolor fault: chromatic colors are ordered by hue
    /// and the achromatic ones follow. A rotation by 3 always crosses between hue
    /// families, which matters because appearance features ignore brightness.
    pub const WHEEL: [Color; 7] = [
        Color::Red,
        Color::Yellow,
        Color::Green,
        Color::Blue,
        Color::Black,
        Color::Silver,
        Color::White,
    ];

    /// Rotate around [`Color::WHEEL`] by `steps` positions.
    pub fn rotated(self, steps: usize) -> Color {
        let pos = Self::WHEEL.iter().position(|c| *c == self).unwrap_or(0);
        Self::WHEEL[(pos + steps) % Self::WHEEL.len()]
    }
}

/// Global attributes that carry emphasis weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Weather,
    TimeOfDay,
}

impl Attribute {
    pub const ALL: [Attribute; 2] = [Attribute::Weather, Attribute::TimeOfDay];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Weather => "weather",
            Attribute::TimeOfDay => "time_of_day",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "weather" => Ok(Attribute::Weather),
            "time_of_day" | "time" => Ok(Attribute::TimeOfDay),
            other => Err(Error::Contract(format!("unknown attribute `{other}`"))),
        }
    }
}
