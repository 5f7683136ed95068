pub mod attitude;
pub mod database;
pub mod descriptor;
pub mod detection;
pub mod error;
pub mod fisheye;
pub mod floorplan;
pub mod matching;
pub mod raycast;
pub mod report;
pub mod svg;
pub mod synth;
