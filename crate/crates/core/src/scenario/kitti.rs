//! Import of KITTI raw recordings: `tracklet_labels.xml` plus OXTS odometry rows.
//!
//! Tracklet poses are given in the Velodyne frame of the recording vehicle
//! (x forward, y left). They are lifted into a local Mercator world frame
//! using the OXTS position and heading of the same frame, so that object
//! velocities can be estimated by finite differences independent of ego motion.
//! The fixed Velodyne-to-IMU mounting offset is not applied.

use std::f64::consts::PI;
use std::path::Path;

use super::{ClassLabel, EgoState, EnvironmentParams, Frame, ObjectState, Scenario, ScenarioMeta};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Point};

const EARTH_RADIUS: f64 = 6_378_137.0;

#[derive(Debug, Clone)]
pub struct KittiImportOptions {
    pub name: String,
    pub frame_rate_hz: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub environment: EnvironmentParams,
}

impl Default for KittiImportOptions {
    fn default() -> Self {
        Self {
            name: "kitti".to_string(),
            frame_rate_hz: 10.0,
            ego_length: super::DEFAULT_EGO_LENGTH,
            ego_width: super::DEFAULT_EGO_WIDTH,
            environment: EnvironmentParams::default(),
        }
    }
}

/// One row of an OXTS file; only the fields used for the ground plane are kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OxtsRow {
    pub lat: f64,
    pub lon: f64,
    pub yaw: f64,
    pub vn: f64,
    pub ve: f64,
}

pub fn parse_oxts_rows(text: &str) -> Result<Vec<OxtsRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(format!("oxts line {}", i + 1), format!("{e}")))?;
        if values.len() < 8 {
            return Err(Error::input(
                format!("oxts line {}", i + 1),
                format!("expected at least 8 values, got {}", values.len()),
            ));
        }
        rows.push(OxtsRow {
            lat: values[0],
            lon: values[1],
            yaw: values[5],
            vn: values[6],
            ve: values[7],
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackletPose {
    pub tx: f64,
    pub ty: f64,
    pub rz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub object_type: String,
    pub length: f64,
    pub width: f64,
    pub first_frame: usize,
    pub poses: Vec<TrackletPose>,
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn number<T: std::str::FromStr>(node: roxmltree::Node, name: &str, ctx: &str) -> Result<T> {
    let text = child(node, name)
        .and_then(|n| n.text())
        .ok_or_else(|| Error::input(ctx, format!("missing <{name}>")))?;
    text.trim()
        .parse()
        .map_err(|_| Error::input(ctx, format!("<{name}> is not a number: {text:?}")))
}

pub fn parse_tracklets(xml: &str) -> Result<Vec<Tracklet>> {
    if xml.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc = roxmltree::Document::parse_with_options(
        xml,
        roxmltree::ParsingOptions {
            allow_dtd: true,
            ..Default::default()
        },
    ).map_err(|e| Error::input("tracklets", e.to_string()))?;
    let Some(list) = doc.descendants().find(|n| n.has_tag_name("tracklets")) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (i, item) in list.children().filter(|n| n.has_tag_name("item")).enumerate() {
        let ctx = format!("tracklets item {i}");
        let object_type = child(item, "objectType")
            .and_then(|n| n.text())
            .unwrap_or("")
            .trim()
            .to_string();
        let mut poses = Vec::new();
        if let Some(p) = child(item, "poses") {
            for (j, pose) in p.children().filter(|n| n.has_tag_name("item")).enumerate() {
                let pctx = format!("{ctx} pose {j}");
                poses.push(TrackletPose {
                    tx: number(pose, "tx", &pctx)?,
                    ty: number(pose, "ty", &pctx)?,
                    rz: number(pose, "rz", &pctx)?,
                });
            }
        }
        out.push(Tracklet {
            object_type,
            length: number(item, "l", &ctx)?,
            width: number(item, "w", &ctx)?,
            first_frame: number(item, "first_frame", &ctx)?,
            poses,
        });
    }
    Ok(out)
}

fn kitti_class(object_type: &str) -> Option<ClassLabel> {
    match object_type {
        "Car" => Some(ClassLabel::Car),
        "Van" => Some(ClassLabel::Van),
        "Truck" => Some(ClassLabel::Truck),
        "Pedestrian" | "Person_sitting" | "Person (sitting)" => Some(ClassLabel::Pedestrian),
        "Cyclist" => Some(ClassLabel::Cyclist),
        "Tram" => Some(ClassLabel::Tram),
        "Misc" => Some(ClassLabel::Misc),
        _ => None,
    }
}

/// Finite-difference velocities of a track sampled at `times`.
/// Interior samples use central differences, the ends one-sided ones.
pub fn finite_difference_velocities(positions: &[Point], times: &[f64]) -> Vec<Point> {
    let n = positions.len();
    (0..n)
        .map(|k| {
            if n < 2 {
                return [0.0, 0.0];
            }
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            let dt = times[b] - times[a];
            [
                (positions[b][0] - positions[a][0]) / dt,
                (positions[b][1] - positions[a][1]) / dt,
            ]
        })
        .collect()
}

pub fn import_kitti_tracklets(tracklet_xml: &str, oxts: &str, options: &KittiImportOptions) -> Result<Scenario> {
    let rows = parse_oxts_rows(oxts)?;
    if rows.is_empty() {
        return Err(Error::input("oxts", "no odometry rows"));
    }
    let tracklets = parse_tracklets(tracklet_xml)?;
    let period = 1.0 / options.frame_rate_hz;
    let times: Vec<f64> = (0..rows.len()).map(|k| k as f64 * period).collect();

    // local Mercator frame anchored at the first row
    let scale = (rows[0].lat * PI / 180.0).cos();
    let mercator = |r: &OxtsRow| -> Point {
        let x = scale * EARTH_RADIUS * r.lon * PI / 180.0;
        let y = scale * EARTH_RADIUS * ((90.0 + r.lat) * PI / 360.0).tan().ln();
        [x, y]
    };
    let origin = mercator(&rows[0]);
    let ego_pos: Vec<Point> = rows
        .iter()
        .map(|r| {
            let p = mercator(r);
            [p[0] - origin[0], p[1] - origin[1]]
        })
        .collect();

    let mut warnings = Vec::new();
    let mut frames: Vec<Frame> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Frame {
                index: k as u64,
                timestamp: times[k],
                ego: EgoState {
                    bbox: OrientedBox::new(ego_pos[k][0], ego_pos[k][1], options.ego_length, options.ego_width, r.yaw)?,
                    speed: r.vn.hypot(r.ve),
                },
                objects: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;

    for (ti, t) in tracklets.iter().enumerate() {
        let class = kitti_class(&t.object_type).unwrap_or_else(|| {
            warnings.push(format!("tracklet {ti}: unsupported object type '{}' mapped to misc", t.object_type));
            ClassLabel::Misc
        });
        let mut frame_ids = Vec::new();
        let mut positions = Vec::new();
        let mut yaws = Vec::new();
        for (j, pose) in t.poses.iter().enumerate() {
            let k = t.first_frame + j;
            if k >= rows.len() {
                warnings.push(format!("tracklet {ti}: poses beyond the last odometry row dropped"));
                break;
            }
            let (s, c) = rows[k].yaw.sin_cos();
            positions.push([
                ego_pos[k][0] + c * pose.tx - s * pose.ty,
                ego_pos[k][1] + s * pose.tx + c * pose.ty,
            ]);
            yaws.push(rows[k].yaw + pose.rz);
            frame_ids.push(k);
        }
        let track_times: Vec<f64> = frame_ids.iter().map(|&k| times[k]).collect();
        let velocities = finite_difference_velocities(&positions, &track_times);
        for (idx, &k) in frame_ids.iter().enumerate() {
            let bbox = OrientedBox::new(positions[idx][0], positions[idx][1], t.length, t.width, yaws[idx])
                .map_err(|e| Error::input(format!("tracklet {ti}"), e.to_string()))?;
            frames[k].objects.push(ObjectState {
                id: format!("t{ti}"),
                class,
                bbox,
                velocity: velocities[idx],
            });
        }
    }

    Ok(Scenario {
        meta: ScenarioMeta {
            name: options.name.clone(),
            frame_rate_hz: options.frame_rate_hz,
        },
        environment: options.environment,
        frames,
        warnings,
    })
}

pub fn import_kitti_files(
    tracklet_path: impl AsRef<Path>,
    oxts_path: impl AsRef<Path>,
    options: &KittiImportOptions,
) -> Result<Scenario> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    import_kitti_tracklets(&read(tracklet_path.as_ref())?, &read(oxts_path.as_ref())?, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// OXTS row for a vehicle standing still at a fixed location, heading east.
    const STILL: &str = "49.011 8.4229 112.9 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0";

    fn oxts(n: usize) -> String {
        vec![STILL; n].join("\n")
    }

    fn tracklet_xml(object_type: &str, poses: &[(f64, f64)]) -> String {
        let items: String = poses
            .iter()
            .map(|(x, y)| {
                format!("<item><tx>{x}</tx><ty>{y}</ty><tz>-0.8</tz><rx>0</rx><ry>0</ry><rz>0</rz><state>1</state></item>")
            })
            .collect();
        format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes" ?>
<!DOCTYPE boost_serialization>
<boost_serialization signature="serialization::archive" version="9">
<tracklets class_id="0" tracking_level="0" version="0">
  <count>1</count>
  <item_version>1</item_version>
  <item class_id="1" tracking_level="0" version="1">
    <objectType>{object_type}</objectType>
    <h>1.5</h><w>1.6</w><l>4.0</l>
    <first_frame>0</first_frame>
    <poses class_id="2" tracking_level="0" version="0">
      <count>{}</count>
      <item_version>2</item_version>
      {items}
    </poses>
    <finished>1</finished>
  </item>
</tracklets>
</boost_serialization>"#,
            poses.len()
        )
    }

    #[test]
    fn static_object_has_zero_velocity() {
        let s = import_kitti_tracklets(
            &tracklet_xml("Car", &[(10.0, 2.0); 3]),
            &oxts(3),
            &KittiImportOptions::default(),
        )
        .unwrap();
        assert_eq!(s.frames.len(), 3);
        for f in &s.frames {
            let v = f.objects[0].velocity;
            assert!(v[0].abs() < 1e-9 && v[1].abs() < 1e-9);
        }
    }

    #[test]
    fn moving_object_velocity() {
        let poses: Vec<_> = (0..4).map(|k| (10.0 + k as f64, 0.0)).collect();
        let s = import_kitti_tracklets(&tracklet_xml("Cyclist", &poses), &oxts(4), &KittiImportOptions::default())
            .unwrap();
        for f in &s.frames {
            let o = &f.objects[0];
            assert_eq!(o.class, ClassLabel::Cyclist);
            assert!((o.velocity[0] - 10.0).abs() < 1e-6, "{:?}", o.velocity);
            assert!(o.velocity[1].abs() < 1e-6);
        }
    }

    #[test]
    fn empty_tracklets() {
        let s = import_kitti_tracklets("", &oxts(5), &KittiImportOptions::default()).unwrap();
        assert_eq!(s.frames.len(), 5);
        assert_eq!(s.gt_count(), 0);
    }

    #[test]
    fn unknown_type_is_misc_with_warning() {
        let s = import_kitti_tracklets(
            &tracklet_xml("DontCare", &[(5.0, 5.0)]),
            &oxts(1),
            &KittiImportOptions::default(),
        )
        .unwrap();
        assert_eq!(s.frames[0].objects[0].class, ClassLabel::Misc);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn person_sitting_is_vru() {
        let s = import_kitti_tracklets(
            &tracklet_xml("Person_sitting", &[(5.0, 5.0)]),
            &oxts(1),
            &KittiImportOptions::default(),
        )
        .unwrap();
        assert_eq!(s.frames[0].objects[0].category(), super::super::Category::Vru);
    }

    #[test]
    fn heading_rotates_into_world() {
        // ego heading north: an object 10 m ahead lies at +y in the world frame
        let north = "49.011 8.4229 112.9 0 0 1.5707963267948966 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0";
        let s = import_kitti_tracklets(&tracklet_xml("Car", &[(10.0, 0.0)]), north, &KittiImportOptions::default())
            .unwrap();
        let c = s.frames[0].objects[0].bbox.center();
        assert!(c[0].abs() < 1e-9 && (c[1] - 10.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn central_differences_match_linear_motion() {
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        let pos: Vec<Point> = times.iter().map(|t| [3.0 + 7.5 * t, -1.0 - 2.25 * t]).collect();
        for v in finite_difference_velocities(&pos, &times) {
            assert!((v[0] - 7.5).abs() < 1e-6 && (v[1] + 2.25).abs() < 1e-6);
        }
    }
}
