use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SimError;
use crate::gateway::{PlanObject, SceneDescription};
use crate::geometry::Vec3;

pub const DEFAULT_GRIPPER_HOME: Vec3 = Vec3::new(0.0, 0.0, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    /// `None` when the object was seen but not localized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec3>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, Value>,
}

impl SceneObject {
    pub fn new(name: impl Into<String>, position: Vec3) -> Self {
        Self { name: name.into(), position: Some(position), properties: BTreeMap::new() }
    }

    pub fn with_property(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.properties.insert(key.into(), value.into());
        self
    }

    fn property_str(&self, key: &str) -> Option<&str> {
        self.properties.get(key).and_then(Value::as_str)
    }

    pub fn is_fragile(&self) -> bool {
        self.property_str("fragility").is_some_and(|f| f.eq_ignore_ascii_case("high"))
    }

    /// Anything with a `type` property is treated as an obstacle.
    pub fn is_obstacle(&self) -> bool {
        self.properties.contains_key("type")
    }
}

impl From<&PlanObject> for SceneObject {
    fn from(o: &PlanObject) -> Self {
        Self { name: o.name.clone(), position: Some(o.position), properties: o.properties.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneModel {
    pub objects: Vec<SceneObject>,
    pub gripper_home: Vec3,
}

#[derive(Deserialize)]
struct SceneFile {
    #[serde(default)]
    objects: Option<Vec<SceneObject>>,
    #[serde(default)]
    scene_description: Option<SceneFileInner>,
    #[serde(default)]
    gripper_home: Option<Vec3>,
}

#[derive(Deserialize)]
struct SceneFileInner {
    objects: Vec<SceneObject>,
}

impl<'de> Deserialize<'de> for SceneModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = SceneFile::deserialize(d)?;
        let objects = f
            .objects
            .or(f.scene_description.map(|s| s.objects))
            .ok_or_else(|| serde::de::Error::missing_field("objects"))?;
        SceneModel::with_home(objects, f.gripper_home.unwrap_or(DEFAULT_GRIPPER_HOME)).map_err(serde::de::Error::custom)
    }
}

impl SceneModel {
    pub fn new(objects: Vec<SceneObject>) -> Result<Self, SimError> {
        Self::with_home(objects, DEFAULT_GRIPPER_HOME)
    }

    pub fn with_home(objects: Vec<SceneObject>, gripper_home: Vec3) -> Result<Self, SimError> {
        for (i, o) in objects.iter().enumerate() {
            if o.name.trim().is_empty() {
                return Err(SimError::InvalidScene(format!("object {i} has an empty name")));
            }
            if objects[..i].iter().any(|p| p.name == o.name) {
                return Err(SimError::InvalidScene(format!("duplicate object '{}'", o.name)));
            }
            if o.position.is_some_and(|p| !p.is_finite()) {
                return Err(SimError::InvalidScene(format!("object '{}' has a non-finite position", o.name)));
            }
        }
        if !gripper_home.is_finite() {
            return Err(SimError::InvalidScene("non-finite gripper home".into()));
        }
        Ok(Self { objects, gripper_home })
    }

    pub fn from_description(d: &SceneDescription) -> Result<Self, SimError> {
        Self::new(d.objects.iter().map(SceneObject::from).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.name == name)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.is_obstacle())
    }

    /// Exact name match, else the first object whose name contains
    /// `keyword` and none of `exclude`.
    pub fn resolve(&self, keyword: &str, exclude: &[&str]) -> Option<&SceneObject> {
        self.get(keyword).or_else(|| {
            self.objects.iter().find(|o| o.name.contains(keyword) && !exclude.iter().any(|x| o.name.contains(x)))
        })
    }

    /// Localized objects with the given name or, with `None`, any localized
    /// object, nearest to `from` first. Ties keep scene order.
    pub fn nearest(&self, from: Vec3, name: Option<&str>) -> Option<(&SceneObject, f64)> {
        self.objects
            .iter()
            .filter(|o| name.is_none_or(|n| o.name == n))
            .filter_map(|o| o.position.map(|p| (o, p.distance(from))))
            .fold(None, |best: Option<(&SceneObject, f64)>, (o, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((o, d)),
            })
    }
}
