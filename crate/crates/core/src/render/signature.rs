//! Weather and time-of-day signature table.
//!
//! | weather | sky             | ground          | objects                              |
//! |---------|-----------------|-----------------|--------------------------------------|
//! | sunny   | (180, 210, 235) | (120, 120, 120) | unchanged                            |
//! | rain    | (130, 140, 135) | (70, 72, 76)    | 30% toward (128, 130, 135)           |
//! | fog     | (200, 200, 200) | (120, 120, 120) | toward (200, 200, 200) by 1 − e^(−d/30) |
//! | snow    | (215, 225, 240) | (230, 232, 236) | unchanged                            |
//!
//! Ground under fog fades by the same distance law. Time of day scales every
//! channel: day ×1.0, dusk ×0.65, night ×0.35.

use crate::vocab::{TimeOfDay, Weather};

pub const FOG_COLOR: [f64; 3] = [200.0, 200.0, 200.0];
pub const FOG_DISTANCE: f64 = 30.0;
const RAIN_TINT: [f64; 3] = [128.0, 130.0, 135.0];
const RAIN_MIX: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lighting {
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
}

impl Lighting {
    pub fn new(weather: Weather, time_of_day: TimeOfDay) -> Self {
        Self { weather, time_of_day }
    }

    pub fn brightness(&self) -> f64 {
        match self.time_of_day {
            TimeOfDay::Day => 1.0,
            TimeOfDay::Dusk => 0.65,
            TimeOfDay::Night => 0.35,
        }
    }

    pub fn sky(&self) -> [f64; 3] {
        match self.weather {
            Weather::Sunny => [180.0, 210.0, 235.0],
            Weather::Rain => [130.0, 140.0, 135.0],
            Weather::Fog => FOG_COLOR,
            Weather::Snow => [215.0, 225.0, 240.0],
        }
    }

    fn ground_base(&self) -> [f64; 3] {
        match self.weather {
            Weather::Sunny | Weather::Fog => [120.0, 120.0, 120.0],
            Weather::Rain => [70.0, 72.0, 76.0],
            Weather::Snow => [230.0, 232.0, 236.0],
        }
    }

    fn fog_factor(&self, distance: f64) -> f64 {
        match self.weather {
            Weather::Fog => 1.0 - (-distance.max(0.0) / FOG_DISTANCE).exp(),
            _ => 0.0,
        }
    }

    /// Ground color seen at horizontal `distance` meters, before time scaling.
    pub fn ground(&self, distance: f64) -> [f64; 3] {
        mix(self.ground_base(), FOG_COLOR, self.fog_factor(distance))
    }

    /// Weather modification of a surface color at `distance`, before time scaling.
    pub fn surface(&self, rgb: [f64; 3], distance: f64) -> [f64; 3] {
        match self.weather {
            Weather::Rain => mix(rgb, RAIN_TINT, RAIN_MIX),
            Weather::Fog => mix(rgb, FOG_COLOR, self.fog_factor(distance)),
            Weather::Sunny | Weather::Snow => rgb,
        }
    }

    /// Final 8-bit color after weather and time of day.
    pub fn shade(&self, rgb: [f64; 3]) -> [u8; 3] {
        let b = self.brightness();
        rgb.map(|c| to_u8(c * b))
    }
}

pub fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t)
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// All twelve (weather, time) signatures.
pub fn all_signatures() -> Vec<Lighting> {
    let mut out = Vec::new();
    for w in Weather::ALL {
        for t in TimeOfDay::ALL {
            out.push(Lighting::new(*w, *t));
        }
    }
    out
}
