//! TOML loading with key-path error reporting.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Parses `text` (the contents of `path`) into `T`, reporting the dotted key
/// path of the first offending entry.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        key: String::new(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        key: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text, path)
}

/// Serde adapter: an angle held in radians, written in files as degrees.
pub mod degrees {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rad: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(rad.to_degrees())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d).map(f64::to_radians)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    #[test]
    fn type_errors_carry_the_key_path() {
        #[derive(serde::Deserialize, Debug)]
        #[allow(dead_code)]
        struct Outer {
            field: FieldSpec,
        }
        let err = parse_toml::<Outer>("[field]\nnum_rows = \"many\"\n", Path::new("s.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("field.num_rows"), "{err}");
        let err = parse_toml::<Outer>("[field]\nrow_lenght = 3.0\n", Path::new("s.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("row_lenght"), "{err}");
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert!(parse_toml::<FieldSpec>("num_rows = = 3", Path::new("x.toml")).is_err());
    }
}
