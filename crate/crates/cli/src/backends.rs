//! Backend selection and payload-to-message mapping.

use std::path::Path;

use anyhow::Context;
use evisel_core::backend::{Backend, HttpBackend, HttpBackendConfig, MessagePart, SyntheticBackend};
use evisel_core::pool::PoolCandidate;
use evisel_core::seeded::derive_seed;
use serde::Serialize;

use crate::config::BackendFileConfig;

/// Fully resolved backend settings, echoed into the config hash. Contains
/// the credential variable's name, never its value.
#[derive(Debug, Clone, Serialize)]
pub struct BackendSpec {
    pub role: &'static str,
    pub kind: BackendKindSpec,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "backend")]
pub enum BackendKindSpec {
    Synthetic,
    Http {
        base_url: String,
        model: String,
        api_key_env: Option<String>,
        timeout_secs: u64,
    },
}

/// Resolves one backend's settings, collecting problems. `force_synthetic`
/// comes from the `--backend synthetic` override.
pub fn resolve_backend(
    role: &'static str,
    file: Option<&BackendFileConfig>,
    force_synthetic: bool,
    problems: &mut Vec<String>,
) -> BackendSpec {
    let synthetic = BackendSpec {
        role,
        kind: BackendKindSpec::Synthetic,
    };
    if force_synthetic {
        return synthetic;
    }
    let Some(file) = file else {
        return synthetic;
    };
    match file.kind.as_str() {
        "synthetic" => synthetic,
        "http" => {
            let mut missing = Vec::new();
            if file.base_url.is_none() {
                missing.push("base_url");
            }
            if file.model.is_none() {
                missing.push("model");
            }
            if !missing.is_empty() {
                problems.push(format!(
                    "{role} backend: http kind needs {}",
                    missing.join(" and ")
                ));
                return synthetic;
            }
            if let Some(var) = &file.api_key_env {
                if std::env::var(var).is_err() {
                    problems.push(format!(
                        "{role} backend: credential variable `{var}` is not set"
                    ));
                }
            }
            BackendSpec {
                role,
                kind: BackendKindSpec::Http {
                    base_url: file.base_url.clone().unwrap_or_default(),
                    model: file.model.clone().unwrap_or_default(),
                    api_key_env: file.api_key_env.clone(),
                    timeout_secs: file.timeout_secs.unwrap_or(120),
                },
            }
        }
        other => {
            problems.push(format!(
                "{role} backend: unknown kind `{other}` (expected synthetic or http)"
            ));
            synthetic
        }
    }
}

/// Builds the backend described by a spec. Synthetic backends derive their
/// seed from the master seed and the backend's role, so the surrogate and
/// main models behave as distinct deterministic models.
pub fn build_backend(spec: &BackendSpec, seed: u64) -> anyhow::Result<Box<dyn Backend>> {
    match &spec.kind {
        BackendKindSpec::Synthetic => Ok(Box::new(SyntheticBackend::new(derive_seed(
            seed, spec.role,
        )))),
        BackendKindSpec::Http {
            base_url,
            model,
            api_key_env,
            timeout_secs,
        } => {
            let backend = HttpBackend::new(HttpBackendConfig {
                id: format!("{}-{model}", spec.role),
                base_url: base_url.clone(),
                model: model.clone(),
                api_key_env: api_key_env.clone(),
                timeout_secs: *timeout_secs,
            })
            .with_context(|| format!("building {} backend", spec.role))?;
            Ok(Box::new(backend))
        }
    }
}

fn media_type_for(path: &str) -> &'static str {
    let extension = Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    match extension.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "webp" => "image/webp",
        "gif" => "image/gif",
        "png" => "image/png",
        _ => "application/octet-stream",
    }
}

/// Maps a payload string to message parts.
///
/// `text:` prefixes and bare strings become text parts; `http(s)://`
/// payloads become image URLs; `file:` payloads are read and inlined as
/// image data. An unreadable file degrades to a text part carrying the
/// payload string, so one bad attachment fails its own probe rather than
/// the process; `file:` payloads are also checked during validation.
pub fn payload_parts(payload: &str) -> Vec<MessagePart> {
    if let Some(text) = payload.strip_prefix("text:") {
        return vec![MessagePart::text(text)];
    }
    if payload.starts_with("http://") || payload.starts_with("https://") {
        return vec![MessagePart::image_url(payload)];
    }
    if let Some(path) = payload.strip_prefix("file:") {
        return match std::fs::read(path) {
            Ok(bytes) => vec![MessagePart::image_from_bytes(media_type_for(path), &bytes)],
            Err(_) => vec![MessagePart::text(payload)],
        };
    }
    vec![MessagePart::text(payload)]
}

/// Maps a pool candidate's payload to message parts.
pub fn candidate_parts(candidate: &PoolCandidate) -> Vec<MessagePart> {
    payload_parts(&candidate.payload)
}

/// Validation-time check that `file:` payloads point at readable files.
pub fn check_file_payload(payload: &str, owner: &str, problems: &mut Vec<String>) {
    if let Some(path) = payload.strip_prefix("file:") {
        if !Path::new(path).is_file() {
            problems.push(format!("{owner}: attachment file `{path}` not found"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payloads_map_by_prefix() {
        assert_eq!(
            payload_parts("text:a cello on stage"),
            vec![MessagePart::text("a cello on stage")]
        );
        assert_eq!(
            payload_parts("plain description"),
            vec![MessagePart::text("plain description")]
        );
        assert_eq!(
            payload_parts("https://example.invalid/cat.png"),
            vec![MessagePart::image_url("https://example.invalid/cat.png")]
        );
    }

    #[test]
    fn file_payloads_inline_image_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pixel.png");
        std::fs::write(&path, [0x89, 0x50, 0x4e, 0x47]).unwrap();
        let payload = format!("file:{}", path.display());
        let parts = payload_parts(&payload);
        assert_eq!(parts.len(), 1);
        match &parts[0] {
            MessagePart::ImageData { media_type, base64 } => {
                assert_eq!(media_type, "image/png");
                assert!(!base64.is_empty());
            }
            other => panic!("expected image data, got {other:?}"),
        }
        let missing = payload_parts("file:/nonexistent/image.png");
        assert_eq!(
            missing,
            vec![MessagePart::text("file:/nonexistent/image.png")]
        );
    }

    #[test]
    fn media_types_follow_the_extension() {
        assert_eq!(media_type_for("a/b.JPG"), "image/jpeg");
        assert_eq!(media_type_for("a/b.webp"), "image/webp");
        assert_eq!(media_type_for("a/b"), "application/octet-stream");
    }

    #[test]
    fn backend_resolution_collects_problems() {
        let mut problems = Vec::new();
        let spec = resolve_backend("surrogate", None, false, &mut problems);
        assert!(matches!(spec.kind, BackendKindSpec::Synthetic));
        assert!(problems.is_empty());

        let incomplete = BackendFileConfig {
            kind: "http".into(),
            base_url: None,
            model: Some("m".into()),
            api_key_env: None,
            timeout_secs: None,
        };
        resolve_backend("surrogate", Some(&incomplete), false, &mut problems);
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("base_url"));

        let unknown = BackendFileConfig {
            kind: "grpc".into(),
            base_url: None,
            model: None,
            api_key_env: None,
            timeout_secs: None,
        };
        resolve_backend("main", Some(&unknown), false, &mut problems);
        assert_eq!(problems.len(), 2);

        let forced = resolve_backend("main", Some(&unknown), true, &mut problems);
        assert!(matches!(forced.kind, BackendKindSpec::Synthetic));
        assert_eq!(problems.len(), 2);
    }

    #[test]
    fn missing_credential_variables_fail_validation() {
        let http = BackendFileConfig {
            kind: "http".into(),
            base_url: Some("http://localhost:1/v1".into()),
            model: Some("m".into()),
            api_key_env: Some("EVISEL_TEST_UNSET_VAR_XYZ".into()),
            timeout_secs: None,
        };
        let mut problems = Vec::new();
        resolve_backend("surrogate", Some(&http), false, &mut problems);
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("EVISEL_TEST_UNSET_VAR_XYZ"));
    }

    #[test]
    fn synthetic_backends_differ_by_role() {
        let surrogate = build_backend(
            &BackendSpec {
                role: "surrogate",
                kind: BackendKindSpec::Synthetic,
            },
            42,
        )
        .unwrap();
        let main = build_backend(
            &BackendSpec {
                role: "main",
                kind: BackendKindSpec::Synthetic,
            },
            42,
        )
        .unwrap();
        assert_ne!(surrogate.id(), main.id());
    }
}
