//! Name-keyed registries for the interchangeable strategies used by the
//! simulator: data partitioning, global-model combiners, client selection and
//! bandwidth scheduling.
//!
//! Strategies are referenced from scenario files with a compact
//! `name` or `name(arg, ...)` notation, e.g. `dirichlet(0.5)` or `shards(2)`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Parsed `name(arg, ...)` reference to a registered strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub name: String,
    pub args: Vec<f64>,
}

impl StrategySpec {
    pub fn new(name: impl Into<String>, args: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::Config(format!("malformed strategy reference `{text}`"));
        let (name, args) = match text.find('(') {
            None => (text, Vec::new()),
            Some(open) => {
                let inner = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                let args = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?
                };
                (text[..open].trim(), args)
            }
        };
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(bad());
        }
        Ok(Self::new(name, args))
    }

    /// The single numeric argument, or `default` when none was given.
    pub fn arg_or(&self, default: f64) -> Result<f64> {
        match self.args.as_slice() {
            [] => Ok(default),
            [x] => Ok(*x),
            _ => Err(Error::Config(format!(
                "strategy `{}` takes at most one argument",
                self.name
            ))),
        }
    }

    pub fn no_args(&self) -> Result<()> {
        if self.args.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "strategy `{}` takes no arguments",
                self.name
            )))
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            let args: Vec<String> = self.args.iter().map(|a| format!("{a:?}")).collect();
            write!(f, "({})", args.join(", "))?;
        }
        Ok(())
    }
}

pub type Factory<T> = fn(&StrategySpec) -> Result<Box<T>>;

/// Maps strategy names to constructors producing boxed trait objects.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.factories.insert(name, factory);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn create(&self, spec: &StrategySpec) -> Result<Box<T>> {
        match self.factories.get(spec.name.as_str()) {
            Some(factory) => factory(spec),
            None => Err(Error::Config(format!(
                "unknown {} `{}` (valid: {})",
                self.kind,
                spec.name,
                self.names().join(", ")
            ))),
        }
    }

    pub fn create_from_str(&self, text: &str) -> Result<Box<T>> {
        self.create(&StrategySpec::parse(text)?)
    }
}
