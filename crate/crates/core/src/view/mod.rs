//! Standard views, pose sampling, slicing and rasterisation.

mod frames;
mod markers;
mod pose;
mod raster;
mod sector;
mod slice;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use frames::{standard_frame, FrameConfig};
pub use markers::{default_marker_epsilon, encode_all_markers, encode_view_markers, ViewMarkerSet};
pub use pose::{
    sample_pose, to_plane_coords, ImagePlacement, PlanePose, PoseRanges, PoseSamplingLimits,
};
pub use raster::{rasterize, LabelImage, DRAW_ORDER};
pub use sector::{apply_sector, make_sector, SectorCone};
pub use slice::{polygon_area, slice_mesh, Polygon, StructureSlice};

/// Echocardiographic standard view. Codes are stable and define tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewLabel {
    A2ch = 0,
    A4ch = 1,
    A5ch = 2,
    Aplax = 3,
}

impl ViewLabel {
    pub const ALL: [ViewLabel; 4] = [ViewLabel::A2ch, ViewLabel::A4ch, ViewLabel::A5ch, ViewLabel::Aplax];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewLabel::A2ch => "a2ch",
            ViewLabel::A4ch => "a4ch",
            ViewLabel::A5ch => "a5ch",
            ViewLabel::Aplax => "aplax",
        }
    }
}

impl fmt::Display for ViewLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown view {s:?}"))
    }
}
