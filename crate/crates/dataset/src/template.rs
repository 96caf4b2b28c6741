use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tokroute_core::protocol::{contains_tag, TaskKind};

use crate::DatasetError;

const BUILTIN: &str = include_str!("../templates/default.toml");

/// A conversation fixture for one task kind. `{caption}` in `user`,
/// `prefix` and `suffix` is replaced by the caption text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub kind: TaskKind,
    pub user: String,
    #[serde(default)]
    pub prefix: String,
    #[serde(default)]
    pub suffix: String,
    /// Whether the reply grounds the task with the caption's box. Defaults
    /// to whether the kind requires a region.
    #[serde(default)]
    pub region: Option<bool>,
}

impl Template {
    pub fn uses_region(&self) -> bool {
        self.region.unwrap_or_else(|| self.kind.requires_region())
    }

    fn check(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::Template {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.kind.requires_region() && !self.uses_region() {
            return Err(invalid("kind requires a region"));
        }
        for text in [&self.user, &self.prefix, &self.suffix] {
            if contains_tag(text) {
                return Err(invalid("template text contains a tag"));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct TemplateFile {
    templates: Vec<Template>,
}

/// Templates keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    by_id: BTreeMap<String, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("built-in templates are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        let mut set = Self::default();
        set.extend_toml(text)?;
        Ok(set)
    }

    fn extend_toml(&mut self, text: &str) -> Result<(), DatasetError> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| DatasetError::Template {
            id: String::new(),
            reason: e.to_string(),
        })?;
        for t in file.templates {
            self.insert(t)?;
        }
        Ok(())
    }

    /// Loads every `*.toml` file in `dir`, in name order.
    pub fn load_dir(dir: &Path) -> Result<Self, DatasetError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "toml"));
        paths.sort();
        let mut set = Self::default();
        for p in paths {
            set.extend_toml(&std::fs::read_to_string(&p)?)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, t: Template) -> Result<(), DatasetError> {
        t.check()?;
        if self.by_id.contains_key(&t.id) {
            return Err(DatasetError::Template {
                id: t.id,
                reason: "duplicate id".into(),
            });
        }
        self.by_id.insert(t.id.clone(), t);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.by_id.get(id)
    }

    pub fn for_kind(&self, kind: TaskKind) -> impl Iterator<Item = &Template> {
        self.by_id.values().filter(move |t| t.kind == kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.by_id.values()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_kind() {
        let set = TemplateSet::builtin();
        for kind in TaskKind::ALL {
            assert!(set.for_kind(kind).next().is_some(), "{kind}");
        }
    }

    #[test]
    fn rejects_bad_templates() {
        let tagged = "[[templates]]\nid='x'\nkind='ImageGen'\nuser='<Gen>hi</Gen>'";
        assert!(TemplateSet::from_toml(tagged).is_err());
        let regionless = "[[templates]]\nid='x'\nkind='ImageSeg'\nuser='u'\nregion=false";
        assert!(TemplateSet::from_toml(regionless).is_err());
        let dup = "[[templates]]\nid='x'\nkind='ImageGen'\nuser='u'\n[[templates]]\nid='x'\nkind='AudioGen'\nuser='v'";
        assert!(TemplateSet::from_toml(dup).is_err());
    }

    #[test]
    fn loads_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "[[templates]]\nid='a'\nkind='AudioGen'\nuser='u'").unwrap();
        std::fs::write(dir.path().join("b.toml"), "[[templates]]\nid='b'\nkind='VideoGen'\nuser='u'").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.len(), 2);
    }
}
