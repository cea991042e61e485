//! Clip interchange: a single UTF-8 JSON document per clip.
//!
//! Layout:
//! `{ "clip_id", "frames": [{"joints", "parents"}], "faces"|null,
//!    "mesh_frames": [{"vertices"}]|null, "skin_weights"|null, "valid_mask"|null }`
//!
//! Floats are written with serde_json's shortest exact round-trip encoding,
//! so no precision is lost on re-read. Unknown top-level keys produce
//! warnings, never errors. Self-parented roots in the input are converted
//! to the 0 = root convention on load.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rig::{MeshFrame, RigClip, Skeleton};
use ndarray::Array2;
use serde_json::{json, Value};
use std::path::Path;

const KNOWN_KEYS: [&str; 6] = [
    "clip_id",
    "frames",
    "faces",
    "mesh_frames",
    "skin_weights",
    "valid_mask",
];

pub fn clip_to_json(clip: &RigClip) -> Value {
    let frames: Vec<Value> = clip
        .skeleton_frames
        .iter()
        .map(|s| {
            json!({
                "joints": s.joints.iter().map(|j| json!([j[0], j[1], j[2]])).collect::<Vec<_>>(),
                "parents": s.parents,
            })
        })
        .collect();
    let faces = clip
        .faces
        .as_ref()
        .map(|f| json!(f.iter().map(|t| json!([t[0], t[1], t[2]])).collect::<Vec<_>>()))
        .unwrap_or(Value::Null);
    let mesh_frames = clip
        .mesh_frames
        .as_ref()
        .map(|frames| {
            json!(frames
                .iter()
                .map(|m| json!({
                    "vertices": m.vertices.iter().map(|v| json!([v[0], v[1], v[2]])).collect::<Vec<_>>()
                }))
                .collect::<Vec<_>>())
        })
        .unwrap_or(Value::Null);
    let skin = clip
        .skin_weights
        .as_ref()
        .map(|per_frame| {
            json!(per_frame
                .iter()
                .map(|w| {
                    json!(w
                        .rows()
                        .into_iter()
                        .map(|row| json!(row.iter().copied().collect::<Vec<f64>>()))
                        .collect::<Vec<_>>())
                })
                .collect::<Vec<_>>())
        })
        .unwrap_or(Value::Null);
    let valid = clip
        .valid_mask
        .as_ref()
        .map(|m| json!(m))
        .unwrap_or(Value::Null);

    json!({
        "clip_id": clip.clip_id,
        "frames": frames,
        "faces": faces,
        "mesh_frames": mesh_frames,
        "skin_weights": skin,
        "valid_mask": valid,
    })
}

pub fn clip_to_string(clip: &RigClip) -> String {
    serde_json::to_string_pretty(&clip_to_json(clip)).expect("clip JSON serialization")
}

pub fn write_clip(clip: &RigClip, path: &Path) -> Result<()> {
    std::fs::write(path, clip_to_string(clip))?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ClipFormat(msg.into())
}

fn as_f64(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(format!("{ctx}: expected number")))
}

fn as_vec3(v: &Value, ctx: &str) -> Result<Vec3> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(format!("{ctx}: expected [x,y,z]")))?;
    if arr.len() != 3 {
        return Err(bad(format!("{ctx}: expected 3 components, got {}", arr.len())));
    }
    Ok([
        as_f64(&arr[0], ctx)?,
        as_f64(&arr[1], ctx)?,
        as_f64(&arr[2], ctx)?,
    ])
}

/// Parses a clip document. Returns the clip plus non-fatal warnings
/// (unknown top-level keys, converted self-parented roots).
pub fn clip_from_json(doc: &Value) -> Result<(RigClip, Vec<String>)> {
    let obj = doc
        .as_object()
        .ok_or_else(|| bad("top level must be an object"))?;
    let mut warnings = Vec::new();
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            warnings.push(format!("unknown top-level key ignored: {key:?}"));
        }
    }

    let clip_id = obj
        .get("clip_id")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing clip_id"))?
        .to_string();

    let frames_val = obj
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing frames array"))?;
    let mut skeleton_frames = Vec::with_capacity(frames_val.len());
    for (k, frame) in frames_val.iter().enumerate() {
        let fobj = frame
            .as_object()
            .ok_or_else(|| bad(format!("frame {k} must be an object")))?;
        let joints_val = fobj
            .get("joints")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("frame {k}: missing joints")))?;
        let joints = joints_val
            .iter()
            .map(|j| as_vec3(j, &format!("frame {k} joint")))
            .collect::<Result<Vec<_>>>()?;
        let parents_val = fobj
            .get("parents")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("frame {k}: missing parents")))?;
        let mut parents = Vec::with_capacity(parents_val.len());
        for (j, p) in parents_val.iter().enumerate() {
            let p = p
                .as_u64()
                .ok_or_else(|| bad(format!("frame {k} parent {j}: expected non-negative int")))?;
            // self-parented root convention: joint j pointing at itself
            let p = if p == j as u64 + 1 {
                warnings.push(format!(
                    "frame {k} joint {j}: self-parented root converted to 0"
                ));
                0
            } else {
                p
            };
            parents.push(u32::try_from(p).map_err(|_| bad("parent label overflow"))?);
        }
        skeleton_frames.push(Skeleton::new(joints, parents));
    }

    let faces = match obj.get("faces") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| bad("faces must be an array"))?;
            let mut faces = Vec::with_capacity(arr.len());
            for (i, f) in arr.iter().enumerate() {
                let t = f
                    .as_array()
                    .filter(|t| t.len() == 3)
                    .ok_or_else(|| bad(format!("face {i} must be [i,j,k]")))?;
                let mut tri = [0usize; 3];
                for (slot, x) in t.iter().enumerate() {
                    tri[slot] = x
                        .as_u64()
                        .ok_or_else(|| bad(format!("face {i}: indices must be non-negative")))?
                        as usize;
                }
                faces.push(tri);
            }
            Some(faces)
        }
    };

    let mesh_frames = match obj.get("mesh_frames") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| bad("mesh_frames must be an array"))?;
            let mut frames = Vec::with_capacity(arr.len());
            for (k, m) in arr.iter().enumerate() {
                let verts = m
                    .get("vertices")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad(format!("mesh frame {k}: missing vertices")))?;
                let vertices = verts
                    .iter()
                    .map(|v| as_vec3(v, &format!("mesh frame {k} vertex")))
                    .collect::<Result<Vec<_>>>()?;
                frames.push(MeshFrame { vertices });
            }
            Some(frames)
        }
    };

    let skin_weights = match obj.get("skin_weights") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| bad("skin_weights must be an array"))?;
            let mut per_frame = Vec::with_capacity(arr.len());
            for (k, w) in arr.iter().enumerate() {
                let rows = w
                    .as_array()
                    .ok_or_else(|| bad(format!("skin_weights frame {k} must be an array")))?;
                let n_rows = rows.len();
                let n_cols = rows
                    .first()
                    .and_then(Value::as_array)
                    .map(|r| r.len())
                    .unwrap_or(0);
                let mut data = Vec::with_capacity(n_rows * n_cols);
                for (r, row) in rows.iter().enumerate() {
                    let row = row
                        .as_array()
                        .filter(|x| x.len() == n_cols)
                        .ok_or_else(|| {
                            bad(format!("skin_weights frame {k} row {r}: ragged row"))
                        })?;
                    for x in row {
                        data.push(as_f64(x, "skin weight")?);
                    }
                }
                let mat = Array2::from_shape_vec((n_rows, n_cols), data)
                    .map_err(|e| bad(format!("skin_weights frame {k}: {e}")))?;
                per_frame.push(mat);
            }
            Some(per_frame)
        }
    };

    let valid_mask = match obj.get("valid_mask") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| bad("valid_mask must be an array"))?;
            Some(
                arr.iter()
                    .map(|b| b.as_bool().ok_or_else(|| bad("valid_mask entries must be bool")))
                    .collect::<Result<Vec<bool>>>()?,
            )
        }
    };

    Ok((
        RigClip {
            clip_id,
            skeleton_frames,
            faces,
            mesh_frames,
            skin_weights,
            valid_mask,
        },
        warnings,
    ))
}

pub fn clip_from_str(text: &str) -> Result<(RigClip, Vec<String>)> {
    let doc: Value = serde_json::from_str(text)?;
    clip_from_json(&doc)
}

pub fn read_clip(path: &Path) -> Result<(RigClip, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    clip_from_str(&text)
}
