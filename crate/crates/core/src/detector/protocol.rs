//! Line-delimited JSON protocol spoken with external detector processes.
//!
//! The child first prints `{"protocol": 1, "name": ...}`. Each request line
//! carries one 8-bit grayscale frame; the child answers every request, in
//! order, with one line holding the same `id`.

use std::io::{self, BufRead, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Detection, Detector};
use crate::image::{BoundingBox, GrayImage};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub pixels_b64: String,
}

impl Request {
    pub fn new(id: u64, image: &GrayImage) -> Self {
        Self {
            id,
            width: image.width(),
            height: image.height(),
            pixels_b64: STANDARD.encode(image.to_bytes()),
        }
    }

    pub fn image(&self) -> Result<GrayImage, String> {
        let bytes = STANDARD
            .decode(&self.pixels_b64)
            .map_err(|e| format!("bad base64 payload: {e}"))?;
        GrayImage::from_bytes(self.width, self.height, &bytes).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(rename = "class")]
    pub class_name: String,
    pub score: f64,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            class_name: d.class_name.clone(),
            score: d.score,
        }
    }
}

impl From<WireDetection> for Detection {
    fn from(d: WireDetection) -> Self {
        Detection {
            bbox: BoundingBox::new(d.x, d.y, d.w, d.h),
            class_name: d.class_name,
            score: d.score,
        }
    }
}

/// A reply is either a detection list or an error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<WireDetection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn write_line<W: Write, T: Serialize>(out: &mut W, msg: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, msg)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Serves `detector` over the protocol until `input` closes.
///
/// Malformed requests get an error reply and the loop continues.
pub fn serve<R: BufRead, W: Write>(detector: &dyn Detector, input: R, mut output: W) -> io::Result<()> {
    write_line(
        &mut output,
        &Handshake {
            protocol: VERSION,
            name: detector.id().to_owned(),
        },
    )?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64())),
                detections: None,
                error: Some(format!("malformed request: {e}")),
            },
            Ok(req) => match req
                .image()
                .and_then(|img| detector.detect(&img).map_err(|e| e.to_string()))
            {
                Ok(dets) => Response {
                    id: Some(req.id),
                    detections: Some(dets.iter().map(WireDetection::from).collect()),
                    error: None,
                },
                Err(e) => Response {
                    id: Some(req.id),
                    detections: None,
                    error: Some(e),
                },
            },
        };
        write_line(&mut output, &reply)?;
    }
    Ok(())
}
