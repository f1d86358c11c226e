//! Scene graphs: objects with boxes, attributes, and relation edges.
//!
//! The on-disk form is a JSON document:
//!
//! ```json
//! {
//!   "image_id": "2370799",
//!   "width": 640,
//!   "height": 480,
//!   "objects": {
//!     "obj1": {
//!       "category": "girl",
//!       "box": [412.0, 158.0, 95.0, 208.0],
//!       "attributes": ["young"],
//!       "relations": [{"predicate": "wearing", "target": "obj2"}]
//!     }
//!   }
//! }
//! ```
//!
//! Boxes are `[x, y, w, h]` in image pixels and get clipped to the image at
//! parse time; a box that clips to zero area is rejected. Category,
//! attribute, and predicate tokens are normalized (lowercased, inner runs of
//! whitespace collapsed) so lookups never depend on annotation casing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene graph is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("image dimensions must be finite and positive, got {width}x{height}")]
    BadDimensions { width: f64, height: f64 },
    #[error("duplicate object id {0:?}")]
    DuplicateObject(String),
    #[error("object {0:?} has an empty category")]
    EmptyCategory(String),
    #[error("object {id:?} has a non-finite box {coords:?}")]
    NonFiniteBox { id: String, coords: [f64; 4] },
    #[error("object {id:?} box {coords:?} has no area inside the image")]
    EmptyBox { id: String, coords: [f64; 4] },
    #[error("object {0:?} has an empty attribute token")]
    EmptyAttribute(String),
    #[error("object {0:?} has a relation with an empty predicate")]
    EmptyPredicate(String),
    #[error("object {object:?} relates to unknown object {target:?}")]
    DanglingRelation { object: String, target: String },
}

/// Normalized annotation token: lowercase, single spaces, trimmed.
///
/// `Token::new("Red ") == Token::new("red")`, and `"to   the LEFT of"`
/// becomes `"to the left of"`. Deserialization normalizes too, so a token
/// read from any document is already canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    pub fn new(raw: &str) -> Token {
        let mut out = String::with_capacity(raw.len());
        for part in raw.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            for ch in part.chars() {
                out.extend(ch.to_lowercase());
            }
        }
        Token(out)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Token {
    fn from(raw: &str) -> Token {
        Token::new(raw)
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Token, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(Token::new(&raw))
    }
}

/// Opaque object identifier, unique within one scene graph. Not normalized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(raw: &str) -> ObjectId {
        ObjectId(raw.to_owned())
    }
}

/// Axis-aligned box, `[x, y, w, h]` in pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Overlap area with `other`; 0 when disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix > 0.0 && iy > 0.0 {
            ix * iy
        } else {
            0.0
        }
    }

    /// Clip to `[0, width] x [0, height]`. `None` when nothing remains. A
    /// box already inside comes back bit-identical, so clipping twice is a
    /// no-op.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = (self.x + self.w).min(width);
        let y1 = (self.y + self.h).min(height);
        if x0 == self.x && y0 == self.y && x1 == self.x + self.w && y1 == self.y + self.h {
            return Some(self.clone());
        }
        if x1 - x0 > 0.0 && y1 - y0 > 0.0 {
            Some(BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        b.coords()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = String;

    fn try_from(v: [f64; 4]) -> Result<BoundingBox, String> {
        let b = BoundingBox::new(v[0], v[1], v[2], v[3]);
        if !b.is_finite() {
            return Err(format!("box {v:?} has non-finite coordinates"));
        }
        if b.w <= 0.0 || b.h <= 0.0 {
            return Err(format!("box {v:?} must have positive width and height"));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub predicate: Token,
    pub target: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub category: Token,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub attributes: BTreeSet<Token>,
    pub relations: Vec<Relation>,
}

/// Validated scene graph. Construct through [`parse_scene_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub objects: BTreeMap<ObjectId, SceneObject>,
}

impl SceneGraph {
    /// Ids of every object with exactly this (normalized) category.
    pub fn objects_by_category(&self, category: &Token) -> BTreeSet<ObjectId> {
        self.objects
            .values()
            .filter(|o| &o.category == category)
            .map(|o| o.id.clone())
            .collect()
    }

    /// Sorted set of distinct categories present in the graph.
    pub fn categories(&self) -> BTreeSet<Token> {
        self.objects.values().map(|o| o.category.clone()).collect()
    }

    pub fn object(&self, id: &ObjectId) -> Option<&SceneObject> {
        self.objects.get(id)
    }

    /// Serialize back to the on-disk JSON document. Parsing the output
    /// reproduces `self` exactly (tokens are already normalized and boxes
    /// already clipped).
    pub fn to_json(&self) -> String {
        let doc = SceneDoc {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            objects: self
                .objects
                .iter()
                .map(|(id, o)| {
                    (
                        id.0.clone(),
                        ObjectDoc {
                            category: o.category.as_str().to_owned(),
                            bbox: o.bbox.coords(),
                            attributes: o.attributes.iter().map(|a| a.as_str().to_owned()).collect(),
                            relations: o.relations.clone(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("scene doc serializes")
    }
}

pub fn has_attribute(object: &SceneObject, attribute: &Token) -> bool {
    object.attributes.contains(attribute)
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneDoc {
    image_id: String,
    width: f64,
    height: f64,
    #[serde(deserialize_with = "objects_rejecting_duplicates")]
    objects: BTreeMap<String, ObjectDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectDoc {
    category: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    relations: Vec<Relation>,
}

/// serde_json's map type silently keeps the last value for a repeated key;
/// duplicate object ids are annotation bugs we want surfaced, so deserialize
/// through a visitor that checks.
fn objects_rejecting_duplicates<'de, D>(d: D) -> Result<BTreeMap<String, ObjectDoc>, D::Error>
where
    D: Deserializer<'de>,
{
    struct V;

    impl<'de> Visitor<'de> for V {
        type Value = BTreeMap<String, ObjectDoc>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of object id to object")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((key, value)) = access.next_entry::<String, ObjectDoc>()? {
                if out.contains_key(&key) {
                    return Err(serde::de::Error::custom(format!(
                        "duplicate object id {key:?}"
                    )));
                }
                out.insert(key, value);
            }
            Ok(out)
        }
    }

    d.deserialize_map(V)
}

/// Parse and validate a scene-graph document.
///
/// Syntax errors carry serde_json's line/column; semantic errors name the
/// offending object id.
pub fn parse_scene_graph(text: &str) -> Result<SceneGraph, SceneError> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|e| {
        // The duplicate-id check surfaces through serde_json's custom error;
        // rewrap so callers get the structured variant.
        let msg = e.to_string();
        if let Some(rest) = msg.strip_prefix("duplicate object id ") {
            let id = rest
                .split(" at line")
                .next()
                .unwrap_or(rest)
                .trim_matches('"')
                .to_owned();
            SceneError::DuplicateObject(id)
        } else {
            SceneError::Syntax(e)
        }
    })?;

    if !(doc.width.is_finite() && doc.height.is_finite() && doc.width > 0.0 && doc.height > 0.0) {
        return Err(SceneError::BadDimensions {
            width: doc.width,
            height: doc.height,
        });
    }

    let mut objects = BTreeMap::new();
    for (raw_id, obj) in &doc.objects {
        let id = ObjectId(raw_id.clone());
        let category = Token::new(&obj.category);
        if category.is_empty() {
            return Err(SceneError::EmptyCategory(raw_id.clone()));
        }
        let raw_box = BoundingBox::new(obj.bbox[0], obj.bbox[1], obj.bbox[2], obj.bbox[3]);
        if !raw_box.is_finite() {
            return Err(SceneError::NonFiniteBox {
                id: raw_id.clone(),
                coords: obj.bbox,
            });
        }
        let bbox = raw_box
            .clip_to(doc.width, doc.height)
            .ok_or(SceneError::EmptyBox {
                id: raw_id.clone(),
                coords: obj.bbox,
            })?;

        let mut attributes = BTreeSet::new();
        for raw in &obj.attributes {
            let token = Token::new(raw);
            if token.is_empty() {
                return Err(SceneError::EmptyAttribute(raw_id.clone()));
            }
            attributes.insert(token);
        }

        let mut relations = Vec::with_capacity(obj.relations.len());
        for rel in &obj.relations {
            if rel.predicate.is_empty() {
                return Err(SceneError::EmptyPredicate(raw_id.clone()));
            }
            if !doc.objects.contains_key(rel.target.as_str()) {
                return Err(SceneError::DanglingRelation {
                    object: raw_id.clone(),
                    target: rel.target.as_str().to_owned(),
                });
            }
            relations.push(rel.clone());
        }

        objects.insert(
            id.clone(),
            SceneObject {
                id,
                category,
                bbox,
                attributes,
                relations,
            },
        );
    }

    Ok(SceneGraph {
        image_id: doc.image_id,
        width: doc.width,
        height: doc.height,
        objects,
    })
}

/// Test fixture shared across modules: three objects, two relation edges
/// (the bag sits left of the girl who wears the jeans).
#[cfg(test)]
pub(crate) fn girl_jeans_bag() -> SceneGraph {
    parse_scene_graph(
        r#"{
          "image_id": "fig1",
          "width": 640,
          "height": 480,
          "objects": {
            "o_girl": {
              "category": "Girl",
              "box": [300.0, 80.0, 120.0, 260.0],
              "attributes": ["young"],
              "relations": [{"predicate": "wearing", "target": "o_jeans"}]
            },
            "o_jeans": {
              "category": "jeans",
              "box": [320.0, 210.0, 80.0, 120.0],
              "attributes": ["blue"]
            },
            "o_bag": {
              "category": "bag",
              "box": [120.0, 200.0, 90.0, 110.0],
              "attributes": ["red", "leather"],
              "relations": [{"predicate": "to the left of", "target": "o_girl"}]
            }
          }
        }"#,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_parses() {
        let g = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":50,
                "objects":{"a":{"category":"cat","box":[10,10,20,20]}}}"#,
        )
        .unwrap();
        assert_eq!(g.image_id, "x");
        assert_eq!(g.objects.len(), 1);
        let obj = g.object(&ObjectId::from("a")).unwrap();
        assert_eq!(obj.category, Token::new("cat"));
        assert!(obj.attributes.is_empty());
        assert!(obj.relations.is_empty());
    }

    #[test]
    fn fixture_counts() {
        let g = girl_jeans_bag();
        assert_eq!(g.objects.len(), 3);
        let edges: usize = g.objects.values().map(|o| o.relations.len()).sum();
        assert_eq!(edges, 2);
        assert_eq!(g.width, 640.0);
        assert_eq!(g.height, 480.0);
    }

    #[test]
    fn token_normalization() {
        assert_eq!(Token::new("  To   THE Left\tof "), Token::new("to the left of"));
        assert_eq!(Token::new("Red").as_str(), "red");
        assert!(Token::new(" \t ").is_empty());
    }

    #[test]
    fn category_lookup_uses_normalized_tokens() {
        let g = girl_jeans_bag();
        let girls = g.objects_by_category(&Token::new("girl"));
        assert_eq!(girls, BTreeSet::from([ObjectId::from("o_girl")]));
        assert!(g.objects_by_category(&Token::new("dog")).is_empty());
    }

    #[test]
    fn attribute_lookup_is_case_insensitive() {
        let g = girl_jeans_bag();
        let bag = g.object(&ObjectId::from("o_bag")).unwrap();
        assert!(has_attribute(bag, &Token::new("Red")));
        assert!(has_attribute(bag, &Token::new("LEATHER")));
        assert!(!has_attribute(bag, &Token::new("blue")));
    }

    #[test]
    fn two_objects_same_category() {
        let g = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":100,"objects":{
                "c1":{"category":"car","box":[0,0,10,10]},
                "c2":{"category":"Car","box":[20,20,10,10]},
                "t1":{"category":"tree","box":[40,40,10,10]}}}"#,
        )
        .unwrap();
        let cars = g.objects_by_category(&Token::new("car"));
        assert_eq!(cars.len(), 2);
        assert!(cars.contains(&ObjectId::from("c1")) && cars.contains(&ObjectId::from("c2")));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_scene_graph("{\"image_id\": \"x\",\n  width: 3}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "unexpected message: {msg}");
    }

    #[test]
    fn dangling_relation_names_both_ids() {
        let err = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":100,"objects":{
                "a":{"category":"cat","box":[0,0,10,10],
                     "relations":[{"predicate":"on","target":"o9"}]}}}"#,
        )
        .unwrap_err();
        match err {
            SceneError::DanglingRelation { object, target } => {
                assert_eq!(object, "a");
                assert_eq!(target, "o9");
            }
            other => panic!("expected DanglingRelation, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_object_id_rejected() {
        let err = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":100,"objects":{
                "a":{"category":"cat","box":[0,0,10,10]},
                "a":{"category":"dog","box":[20,20,10,10]}}}"#,
        )
        .unwrap_err();
        match err {
            SceneError::DuplicateObject(id) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateObject, got {other:?}"),
        }
    }

    #[test]
    fn boxes_are_clipped_to_the_image() {
        let g = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":100,"objects":{
                "a":{"category":"cat","box":[-10,90,30,30]}}}"#,
        )
        .unwrap();
        let b = g.object(&ObjectId::from("a")).unwrap().bbox;
        assert_eq!(b.coords(), [0.0, 90.0, 20.0, 10.0]);
    }

    #[test]
    fn box_clipping_to_nothing_is_an_error() {
        let err = parse_scene_graph(
            r#"{"image_id":"x","width":100,"height":100,"objects":{
                "a":{"category":"cat","box":[150,150,30,30]}}}"#,
        )
        .unwrap_err();
        match err {
            SceneError::EmptyBox { id, .. } => assert_eq!(id, "a"),
            other => panic!("expected EmptyBox, got {other:?}"),
        }
    }

    #[test]
    fn bad_dimensions_rejected() {
        for dims in ["\"width\":0,\"height\":100", "\"width\":100,\"height\":-3"] {
            let text = format!(r#"{{"image_id":"x",{dims},"objects":{{}}}}"#);
            assert!(matches!(
                parse_scene_graph(&text),
                Err(SceneError::BadDimensions { .. })
            ));
        }
    }

    #[test]
    fn roundtrip_is_identity_on_parsed_graphs() {
        let g = girl_jeans_bag();
        let again = parse_scene_graph(&g.to_json()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn intersection_area_basics() {
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::new(1.0, 1.0, 2.0, 2.0);
        let c = BoundingBox::new(5.0, 5.0, 1.0, 1.0);
        assert_eq!(a.intersection_area(&b), 1.0);
        assert_eq!(b.intersection_area(&a), 1.0);
        assert_eq!(a.intersection_area(&c), 0.0);
    }
}
