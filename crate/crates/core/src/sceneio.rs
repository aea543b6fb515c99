//! Scene-pair file formats: the binary container and a human-readable CSV.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flowinit::{FlowField, LabelSet};
use crate::geometry::PointSet;
use crate::pipeline::ScenePair;

const SCENE_MAGIC: &[u8; 4] = b"SSFL";
const SCENE_VERSION: u16 = 1;

const FLAG_HAS_FLOW: u8 = 0b01;
const FLAG_HAS_LABELS: u8 = 0b10;

fn push_points(buf: &mut Vec<u8>, pts: &PointSet) {
    for p in pts.points() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
}

/// Serialize a scene pair to the binary format: magic "SSFL", version u16,
/// flags u8 (bit0 flow, bit1 labels), n u32, P, Q, optional F_gt (all n x 3
/// f64 LE), optional label count u32 + label indices u32.
pub fn write_scene(path: &Path, scene: &ScenePair) -> Result<()> {
    scene.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(SCENE_MAGIC);
    buf.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    let mut flags = 0u8;
    if scene.f_gt.is_some() {
        flags |= FLAG_HAS_FLOW;
    }
    if scene.labels.is_some() {
        flags |= FLAG_HAS_LABELS;
    }
    buf.push(flags);
    buf.extend_from_slice(&(scene.p.len() as u32).to_le_bytes());
    push_points(&mut buf, &scene.p);
    push_points(&mut buf, &scene.q);
    if let Some(flow) = &scene.f_gt {
        for f in flow {
            for c in f {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    if let Some(labels) = &scene.labels {
        buf.extend_from_slice(&(labels.len() as u32).to_le_bytes());
        for &i in labels.indices() {
            buf.extend_from_slice(&(i as u32).to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<ScenePair> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::Format(format!("{}: truncated scene file", path.display())));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != SCENE_MAGIC {
        return Err(Error::Format(format!("{}: not a scene file", path.display())));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != SCENE_VERSION {
        return Err(Error::Format(format!("unsupported scene version {version}")));
    }
    let flags = take(&mut pos, 1)?[0];
    let n = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;

    let read_triples = |pos: &mut usize| -> Result<Vec<[f64; 3]>> {
        let bytes = take(pos, n * 24)?;
        Ok((0..n)
            .map(|i| {
                let mut t = [0.0; 3];
                for (c, item) in t.iter_mut().enumerate() {
                    let off = i * 24 + c * 8;
                    *item = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                }
                t
            })
            .collect())
    };

    let p = PointSet::new(read_triples(&mut pos)?)?;
    let q = PointSet::new(read_triples(&mut pos)?)?;
    let f_gt: Option<FlowField> =
        if flags & FLAG_HAS_FLOW != 0 { Some(read_triples(&mut pos)?) } else { None };
    let labels = if flags & FLAG_HAS_LABELS != 0 {
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut indices = Vec::with_capacity(count);
        for _ in 0..count {
            indices.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let flow = f_gt
            .as_ref()
            .ok_or_else(|| Error::Format("scene has labels but no flow".into()))?;
        let flows = indices
            .iter()
            .map(|&i| {
                flow.get(i)
                    .copied()
                    .ok_or_else(|| Error::Format(format!("label index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(LabelSet::new(indices, flows, n).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());
    let scene = ScenePair { id, p, q, f_gt, labels };
    scene.validate()?;
    Ok(scene)
}

/// CSV export, one row per point: px,py,pz,qx,qy,qz,fx,fy,fz,labeled.
/// Floats use shortest round-trip formatting. Missing flow writes zeros.
pub fn write_scene_csv(path: &Path, scene: &ScenePair) -> Result<()> {
    scene.validate()?;
    let mut out = String::from("px,py,pz,qx,qy,qz,fx,fy,fz,labeled\n");
    let labeled: Vec<bool> = {
        let mut v = vec![false; scene.p.len()];
        if let Some(labels) = &scene.labels {
            for &i in labels.indices() {
                v[i] = true;
            }
        }
        v
    };
    for i in 0..scene.p.len() {
        let p = scene.p.point(i);
        let q = scene.q.point(i);
        let f = scene.f_gt.as_ref().map_or([0.0; 3], |flow| flow[i]);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p[0], p[1], p[2], q[0], q[1], q[2], f[0], f[1], f[2],
            u8::from(labeled[i])
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_scene_csv(path: &Path) -> Result<ScenePair> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty CSV", path.display())))?;
    if header.trim() != "px,py,pz,qx,qy,qz,fx,fy,fz,labeled" {
        return Err(Error::Format(format!("{}: unexpected CSV header", path.display())));
    }
    let mut p = Vec::new();
    let mut q = Vec::new();
    let mut flow: FlowField = Vec::new();
    let mut label_indices = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Format(format!(
                "{}: line {} has {} fields, expected 10",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let nums = fields[..9]
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad float {s:?} on line {}", lineno + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        p.push([nums[0], nums[1], nums[2]]);
        q.push([nums[3], nums[4], nums[5]]);
        flow.push([nums[6], nums[7], nums[8]]);
        match fields[9].trim() {
            "0" => {}
            "1" => label_indices.push(p.len() - 1),
            other => {
                return Err(Error::Format(format!("bad labeled flag {other:?} on line {}", lineno + 2)))
            }
        }
    }
    let n = p.len();
    let labels = if label_indices.is_empty() {
        None
    } else {
        let flows = label_indices.iter().map(|&i| flow[i]).collect();
        Some(LabelSet::new(label_indices, flows, n).map_err(|e| Error::Format(e.to_string()))?)
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());
    let scene = ScenePair { id, p: PointSet::new(p)?, q: PointSet::new(q)?, f_gt: Some(flow), labels };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_scene, SynthSpec};

    fn sample_scene(labeled: bool) -> ScenePair {
        let scene = generate_synthetic_scene(&SynthSpec { points: 24, seed: 4, noise_sigma: 0.001, ..Default::default() });
        if labeled {
            crate::pipeline::with_sampled_labels(&scene, 0.25, 1).unwrap()
        } else {
            scene
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for labeled in [false, true] {
            let scene = sample_scene(labeled);
            let path = dir.path().join(format!("s{labeled}.ssfl"));
            write_scene(&path, &scene).unwrap();
            let back = read_scene(&path).unwrap();
            assert_eq!(scene.p.points(), back.p.points());
            assert_eq!(scene.q.points(), back.q.points());
            assert_eq!(scene.f_gt, back.f_gt);
            assert_eq!(scene.labels, back.labels);
            // writing the reread scene reproduces the same bytes
            let path2 = dir.path().join("again.ssfl");
            write_scene(&path2, &back).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn csv_round_trip_preserves_values_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene(true);
        let path = dir.path().join("s.csv");
        write_scene_csv(&path, &scene).unwrap();
        let back = read_scene_csv(&path).unwrap();
        // shortest round-trip float formatting reparses bit-exactly
        assert_eq!(scene.p.points(), back.p.points());
        assert_eq!(scene.q.points(), back.q.points());
        assert_eq!(scene.f_gt, back.f_gt);
        assert_eq!(scene.labels, back.labels);
        let path2 = dir.path().join("s2.csv");
        write_scene_csv(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn malformed_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ssfl");
        std::fs::write(&path, b"WRONGMAGIC").unwrap();
        assert!(matches!(read_scene(&path), Err(Error::Format(_))));

        let scene = sample_scene(false);
        let good = dir.path().join("good.ssfl");
        write_scene(&good, &scene).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_scene(&path), Err(Error::Format(_))));

        let csv = dir.path().join("bad.csv");
        std::fs::write(&csv, "wrong,header\n").unwrap();
        assert!(matches!(read_scene_csv(&csv), Err(Error::Format(_))));
        std::fs::write(&csv, "px,py,pz,qx,qy,qz,fx,fy,fz,labeled\n1,2,3\n").unwrap();
        assert!(matches!(read_scene_csv(&csv), Err(Error::Format(_))));
        std::fs::write(&csv, "px,py,pz,qx,qy,qz,fx,fy,fz,labeled\n1,2,3,4,5,6,7,8,9,2\n").unwrap();
        assert!(matches!(read_scene_csv(&csv), Err(Error::Format(_))));
    }
}
