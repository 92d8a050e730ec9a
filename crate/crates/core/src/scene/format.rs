//! The scene text format.
//!
//! A scene file is a sequence of blocks:
//!
//! ```text
//! camera {
//!   position 0 1.5 2.6
//!   look_at 0 0.25 0
//!   up 0 1 0
//!   fov_degrees 40
//!   width 128
//!   height 128
//! }
//! material floor {
//!   kind lambertian
//!   albedo 0.65 0.65 0.65
//! }
//! primitive {
//!   shape quad -2 0 2  4 0 0  0 0 -4
//!   material floor
//! }
//! light {
//!   quad -0.3 1.8 -0.3  0.6 0 0  0 0 0.6
//!   radiance 40 40 40
//! }
//! background {
//!   radiance 0 0 0
//! }
//! ```
//!
//! Comments run from `#` to end of line. One key per line; a block closes
//! with `}` on its own line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::scene::{AreaLight, Camera, Material, Primitive, Scene, SceneError, Shape};
use crate::{Float, Rgb, Vec3};

pub fn load_scene<P: AsRef<Path>>(path: P) -> Result<Scene, SceneError> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text)
}

pub fn save_scene<P: AsRef<Path>>(scene: &Scene, path: P) -> Result<(), SceneError> {
    std::fs::write(path, scene_to_string(scene))?;
    Ok(())
}

struct Block {
    kind: String,
    label: Option<String>,
    line: usize,
    entries: Vec<(usize, String, Vec<String>)>,
}

impl Block {
    fn values(&self, key: &str) -> Result<&[String], SceneError> {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(_, _, v)| v.as_slice())
            .ok_or_else(|| SceneError::Parse {
                line: self.line,
                message: format!("{} block is missing key '{key}'", self.kind),
            })
    }

    fn floats(&self, key: &str, n: usize) -> Result<Vec<Float>, SceneError> {
        let raw = self.values(key)?;
        let line = self.line_of(key);
        if raw.len() != n {
            return Err(SceneError::Parse {
                line,
                message: format!("key '{key}' expects {n} numbers, found {}", raw.len()),
            });
        }
        raw.iter()
            .map(|s| {
                s.parse::<Float>().map_err(|_| SceneError::Parse {
                    line,
                    message: format!("key '{key}': '{s}' is not a number"),
                })
            })
            .collect()
    }

    fn vec3(&self, key: &str) -> Result<Vec3, SceneError> {
        let v = self.floats(key, 3)?;
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    fn rgb(&self, key: &str) -> Result<Rgb, SceneError> {
        let v = self.floats(key, 3)?;
        Ok(Rgb::new(v[0], v[1], v[2]))
    }

    fn float(&self, key: &str) -> Result<Float, SceneError> {
        Ok(self.floats(key, 1)?[0])
    }

    fn word(&self, key: &str) -> Result<&str, SceneError> {
        let raw = self.values(key)?;
        if raw.len() != 1 {
            return Err(SceneError::Parse {
                line: self.line_of(key),
                message: format!("key '{key}' expects one word"),
            });
        }
        Ok(&raw[0])
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, _)| *l)
            .unwrap_or(self.line)
    }
}

fn tokenize(text: &str) -> Vec<(usize, Vec<String>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let stripped = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            };
            let tokens: Vec<String> = stripped.split_whitespace().map(str::to_owned).collect();
            if tokens.is_empty() {
                None
            } else {
                Some((i + 1, tokens))
            }
        })
        .collect()
}

fn split_blocks(text: &str) -> Result<Vec<Block>, SceneError> {
    let lines = tokenize(text);
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for (line, tokens) in lines {
        match current.as_mut() {
            None => {
                if tokens.last().map(String::as_str) != Some("{") {
                    return Err(SceneError::Parse {
                        line,
                        message: format!("expected a block header ending in '{{', found '{}'", tokens.join(" ")),
                    });
                }
                let (kind, label) = match tokens.len() {
                    2 => (tokens[0].clone(), None),
                    3 => (tokens[0].clone(), Some(tokens[1].clone())),
                    _ => {
                        return Err(SceneError::Parse {
                            line,
                            message: "block header must be 'kind {' or 'kind name {'".into(),
                        })
                    }
                };
                current = Some(Block { kind, label, line, entries: Vec::new() });
            }
            Some(block) => {
                if tokens.len() == 1 && tokens[0] == "}" {
                    blocks.push(current.take().expect("open block"));
                } else {
                    block
                        .entries
                        .push((line, tokens[0].clone(), tokens[1..].to_vec()));
                }
            }
        }
    }
    if let Some(block) = current {
        return Err(SceneError::Parse {
            line: block.line,
            message: format!("unterminated {} block", block.kind),
        });
    }
    Ok(blocks)
}

pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let blocks = split_blocks(text)?;

    let mut camera: Option<Camera> = None;
    let mut material_names: Vec<String> = Vec::new();
    let mut materials: Vec<Material> = Vec::new();
    let mut name_to_id: HashMap<String, usize> = HashMap::new();
    let mut pending_primitives: Vec<(usize, Shape, String)> = Vec::new();
    let mut lights: Vec<AreaLight> = Vec::new();
    let mut background = Rgb::black();

    for block in &blocks {
        match block.kind.as_str() {
            "camera" => {
                camera = Some(Camera {
                    position: block.vec3("position")?,
                    look_at: block.vec3("look_at")?,
                    up: block.vec3("up")?,
                    fov_degrees: block.float("fov_degrees")?,
                    width: block.float("width")? as u32,
                    height: block.float("height")? as u32,
                });
            }
            "material" => {
                let name = block.label.clone().ok_or_else(|| SceneError::Parse {
                    line: block.line,
                    message: "material block needs a name: 'material <name> {'".into(),
                })?;
                if name_to_id.contains_key(&name) {
                    return Err(SceneError::Parse {
                        line: block.line,
                        message: format!("duplicate material name '{name}'"),
                    });
                }
                let material = match block.word("kind")? {
                    "lambertian" => Material::Lambertian { albedo: block.rgb("albedo")? },
                    "mirror" => Material::Mirror { reflectance: block.rgb("reflectance")? },
                    "dielectric" => Material::Dielectric {
                        ior: block.float("ior")?,
                        tint: match block.values("tint") {
                            Ok(_) => block.rgb("tint")?,
                            Err(_) => Rgb::white(),
                        },
                    },
                    "emissive" => Material::Emissive { radiance: block.rgb("radiance")? },
                    other => {
                        return Err(SceneError::Parse {
                            line: block.line_of("kind"),
                            message: format!("unknown material kind '{other}'"),
                        })
                    }
                };
                name_to_id.insert(name.clone(), materials.len());
                material_names.push(name);
                materials.push(material);
            }
            "primitive" => {
                let raw = block.values("shape")?;
                let line = block.line_of("shape");
                let shape = parse_shape(raw, line)?;
                let material = block.word("material")?.to_owned();
                pending_primitives.push((block.line_of("material"), shape, material));
            }
            "light" => {
                let q = block.floats("quad", 9)?;
                lights.push(AreaLight {
                    corner: Vec3::new(q[0], q[1], q[2]),
                    edge_u: Vec3::new(q[3], q[4], q[5]),
                    edge_v: Vec3::new(q[6], q[7], q[8]),
                    radiance: block.rgb("radiance")?,
                });
            }
            "background" => {
                background = block.rgb("radiance")?;
            }
            other => {
                return Err(SceneError::Parse {
                    line: block.line,
                    message: format!("unknown block kind '{other}'"),
                })
            }
        }
    }

    let camera = camera.ok_or_else(|| SceneError::Validation("missing 'camera' block".into()))?;

    let mut primitives = Vec::with_capacity(pending_primitives.len());
    for (line, shape, material) in pending_primitives {
        let material_id = *name_to_id.get(&material).ok_or_else(|| SceneError::Parse {
            line,
            message: format!("primitive references unknown material '{material}'"),
        })?;
        primitives.push(Primitive { shape, material_id });
    }

    let scene = Scene {
        camera,
        material_names,
        materials,
        primitives,
        lights,
        background,
    };
    scene.validate()?;
    Ok(scene)
}

fn parse_shape(raw: &[String], line: usize) -> Result<Shape, SceneError> {
    let bad = |message: String| SceneError::Parse { line, message };
    let nums = |from: usize, n: usize| -> Result<Vec<Float>, SceneError> {
        if raw.len() != from + n {
            return Err(bad(format!(
                "shape '{}' expects {n} numbers, found {}",
                raw[0],
                raw.len() - from
            )));
        }
        raw[from..]
            .iter()
            .map(|s| {
                s.parse::<Float>()
                    .map_err(|_| bad(format!("shape: '{s}' is not a number")))
            })
            .collect()
    };
    match raw.first().map(String::as_str) {
        Some("sphere") => {
            let v = nums(1, 4)?;
            Ok(Shape::Sphere { center: Vec3::new(v[0], v[1], v[2]), radius: v[3] })
        }
        Some("triangle") => {
            let v = nums(1, 9)?;
            Ok(Shape::Triangle {
                v0: Vec3::new(v[0], v[1], v[2]),
                v1: Vec3::new(v[3], v[4], v[5]),
                v2: Vec3::new(v[6], v[7], v[8]),
            })
        }
        Some("quad") => {
            let v = nums(1, 9)?;
            Ok(Shape::Quad {
                corner: Vec3::new(v[0], v[1], v[2]),
                edge_u: Vec3::new(v[3], v[4], v[5]),
                edge_v: Vec3::new(v[6], v[7], v[8]),
            })
        }
        Some(other) => Err(bad(format!("unknown shape '{other}'"))),
        None => Err(bad("empty shape".into())),
    }
}

/// Serialize a scene in the same format `parse_scene` reads. Numbers use the
/// shortest representation that parses back to the identical f64, so a
/// load → save → load round trip is field-exact.
pub fn scene_to_string(scene: &Scene) -> String {
    let mut out = String::new();
    let v3 = |v: Vec3| format!("{} {} {}", v.x, v.y, v.z);
    let c3 = |c: Rgb| format!("{} {} {}", c.r, c.g, c.b);

    let cam = &scene.camera;
    writeln!(out, "camera {{").unwrap();
    writeln!(out, "  position {}", v3(cam.position)).unwrap();
    writeln!(out, "  look_at {}", v3(cam.look_at)).unwrap();
    writeln!(out, "  up {}", v3(cam.up)).unwrap();
    writeln!(out, "  fov_degrees {}", cam.fov_degrees).unwrap();
    writeln!(out, "  width {}", cam.width).unwrap();
    writeln!(out, "  height {}", cam.height).unwrap();
    writeln!(out, "}}").unwrap();

    for (name, material) in scene.material_names.iter().zip(&scene.materials) {
        writeln!(out, "material {name} {{").unwrap();
        match *material {
            Material::Lambertian { albedo } => {
                writeln!(out, "  kind lambertian").unwrap();
                writeln!(out, "  albedo {}", c3(albedo)).unwrap();
            }
            Material::Mirror { reflectance } => {
                writeln!(out, "  kind mirror").unwrap();
                writeln!(out, "  reflectance {}", c3(reflectance)).unwrap();
            }
            Material::Dielectric { ior, tint } => {
                writeln!(out, "  kind dielectric").unwrap();
                writeln!(out, "  ior {ior}").unwrap();
                writeln!(out, "  tint {}", c3(tint)).unwrap();
            }
            Material::Emissive { radiance } => {
                writeln!(out, "  kind emissive").unwrap();
                writeln!(out, "  radiance {}", c3(radiance)).unwrap();
            }
        }
        writeln!(out, "}}").unwrap();
    }

    for prim in &scene.primitives {
        writeln!(out, "primitive {{").unwrap();
        match prim.shape {
            Shape::Sphere { center, radius } => {
                writeln!(out, "  shape sphere {} {radius}", v3(center)).unwrap();
            }
            Shape::Triangle { v0, v1, v2 } => {
                writeln!(out, "  shape triangle {} {} {}", v3(v0), v3(v1), v3(v2)).unwrap();
            }
            Shape::Quad { corner, edge_u, edge_v } => {
                writeln!(out, "  shape quad {} {} {}", v3(corner), v3(edge_u), v3(edge_v)).unwrap();
            }
        }
        writeln!(out, "  material {}", scene.material_names[prim.material_id]).unwrap();
        writeln!(out, "}}").unwrap();
    }

    for light in &scene.lights {
        writeln!(out, "light {{").unwrap();
        writeln!(out, "  quad {} {} {}", v3(light.corner), v3(light.edge_u), v3(light.edge_v)).unwrap();
        writeln!(out, "  radiance {}", c3(light.radiance)).unwrap();
        writeln!(out, "}}").unwrap();
    }

    writeln!(out, "background {{").unwrap();
    writeln!(out, "  radiance {}", c3(scene.background)).unwrap();
    writeln!(out, "}}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# smallest valid scene
camera {
  position 0 1 3
  look_at 0 0 0
  up 0 1 0
  fov_degrees 45
  width 32
  height 32
}
material floor {
  kind lambertian
  albedo 0.7 0.7 0.7
}
primitive {
  shape quad -2 0 2  4 0 0  0 0 -4
  material floor
}
light {
  quad -0.5 1.9 -0.5  1 0 0  0 0 1
  radiance 10 10 10
}
";

    #[test]
    fn minimal_scene_parses() {
        let scene = parse_scene(MINIMAL).unwrap();
        assert_eq!(scene.lights.len(), 1);
        assert_eq!(scene.primitives.len(), 1);
        assert_eq!(scene.materials.len(), 1);
        assert_eq!(scene.camera.width, 32);
        assert_eq!(scene.background, Rgb::black());
    }

    #[test]
    fn missing_camera_names_camera() {
        // Drop the leading comment plus the whole camera block.
        let no_camera: String = MINIMAL.lines().skip(9).collect::<Vec<_>>().join("\n");
        let err = parse_scene(&no_camera).unwrap_err().to_string();
        assert!(err.contains("camera"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = MINIMAL.replace("fov_degrees 45", "fov_degrees forty-five");
        let err = parse_scene(&text).unwrap_err();
        match err {
            SceneError::Parse { line, message } => {
                assert!(message.contains("fov_degrees"), "{message}");
                assert!(line > 0);
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_material_reference_fails() {
        let text = MINIMAL.replace("material floor\n}", "material marble\n}");
        let err = parse_scene(&text).unwrap_err().to_string();
        assert!(err.contains("marble"), "{err}");
    }

    #[test]
    fn round_trip_is_field_identical() {
        let mut text = MINIMAL.to_owned();
        text.push_str(
            "material glass {\n  kind dielectric\n  ior 1.5\n  tint 0.98 0.99 1\n}\n\
             material shiny {\n  kind mirror\n  reflectance 0.9 0.85 0.8\n}\n\
             primitive {\n  shape sphere 0 0.6 0 0.35\n  material glass\n}\n\
             primitive {\n  shape triangle 0 0 0  1 0 0  0 1 0\n  material shiny\n}\n\
             background {\n  radiance 0.01 0.02 0.03\n}\n",
        );
        let scene = parse_scene(&text).unwrap();
        let written = scene_to_string(&scene);
        let reloaded = parse_scene(&written).unwrap();
        assert_eq!(scene, reloaded);
        // And a second generation to be sure the writer output is stable.
        assert_eq!(written, scene_to_string(&reloaded));
    }

    #[test]
    fn validation_rejects_zero_radius_from_file() {
        let text = MINIMAL.replace("shape quad -2 0 2  4 0 0  0 0 -4", "shape sphere 0 0 0 0");
        let err = parse_scene(&text).unwrap_err().to_string();
        assert!(err.contains("radius"), "{err}");
    }
}
