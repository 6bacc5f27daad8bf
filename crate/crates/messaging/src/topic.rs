//! Topic names and subscription patterns.
//!
//! A topic is one to eight `/segment` levels, each `[a-z0-9_]+`. Patterns
//! may use `+` for exactly one level at any depth and `#` as the last level
//! for any number of remaining levels, including none.

use std::fmt;

pub const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicError {
    #[error("topic must start with '/'")]
    MissingSlash,
    #[error("empty level")]
    EmptyLevel,
    #[error("invalid character {0:?}")]
    BadChar(char),
    #[error("more than {MAX_DEPTH} levels")]
    TooDeep,
}

fn valid_segment(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::EmptyLevel);
    }
    match s.chars().find(|c| !matches!(c, 'a'..='z' | '0'..='9' | '_')) {
        Some(c) => Err(TopicError::BadChar(c)),
        None => Ok(()),
    }
}

fn levels(s: &str) -> Result<Vec<&str>, TopicError> {
    let rest = s.strip_prefix('/').ok_or(TopicError::MissingSlash)?;
    let v: Vec<&str> = rest.split('/').collect();
    if v.len() > MAX_DEPTH {
        return Err(TopicError::TooDeep);
    }
    Ok(v)
}

pub fn validate_topic(topic: &str) -> Result<(), TopicError> {
    levels(topic)?.into_iter().try_for_each(valid_segment)
}

pub fn is_valid_topic(topic: &str) -> bool {
    validate_topic(topic).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("'#' must be the last level")]
    HashNotLast,
}

impl PatternError {
    pub fn code(&self) -> &'static str {
        "BAD_PATTERN"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Level {
    Exact(String),
    One,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern {
    levels: Vec<Level>,
}

impl Pattern {
    pub fn parse(s: &str) -> Result<Self, PatternError> {
        let raw = levels(s)?;
        let n = raw.len();
        let mut out = Vec::with_capacity(n);
        for (i, l) in raw.into_iter().enumerate() {
            out.push(match l {
                "+" => Level::One,
                "#" if i + 1 == n => Level::Rest,
                "#" => return Err(PatternError::HashNotLast),
                _ => {
                    valid_segment(l)?;
                    Level::Exact(l.to_string())
                }
            });
        }
        Ok(Self { levels: out })
    }

    pub fn is_exact(&self) -> bool {
        self.levels.iter().all(|l| matches!(l, Level::Exact(_)))
    }

    pub fn matches(&self, topic: &str) -> bool {
        let Some(rest) = topic.strip_prefix('/') else {
            return false;
        };
        let mut parts = rest.split('/');
        for level in &self.levels {
            match level {
                Level::Rest => return true,
                Level::One => {
                    if parts.next().is_none() {
                        return false;
                    }
                }
                Level::Exact(e) => {
                    if parts.next() != Some(e.as_str()) {
                        return false;
                    }
                }
            }
        }
        parts.next().is_none()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.levels {
            match l {
                Level::Exact(s) => write!(f, "/{s}")?,
                Level::One => f.write_str("/+")?,
                Level::Rest => f.write_str("/#")?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Pattern {
    type Err = PatternError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::parse(s)
    }
}
