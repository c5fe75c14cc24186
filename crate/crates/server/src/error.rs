use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use xmap_core::Error;

/// Every `code` an error response can carry: the pipeline's own codes plus
/// the ones that only exist at the HTTP layer.
pub const ERROR_CODES: &[&str] = &[
    "ragged_rows",
    "non_numeric_cell",
    "too_few_rows",
    "too_few_columns",
    "already_preprocessed",
    "not_preprocessed",
    "parse_error",
    "dimension_mismatch",
    "degenerate_data",
    "invalid_components",
    "component_out_of_range",
    "empty_selection",
    "unknown_selection",
    "index_out_of_range",
    "perplexity_infeasible",
    "invalid_config",
    "numerical_divergence",
    "fit_diverged",
    "outside_bbox",
    "corrupt_session",
    "version_mismatch",
    "io_error",
    "bad_request",
    "unknown_dataset",
    "unknown_session",
    "not_ready",
    "not_found",
    "internal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.to_owned(), message: message.into(), detail: None } }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unknown_dataset(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_dataset", format!("no dataset with id {id:?}"))
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session with id {id:?}"))
    }

    pub fn not_ready(id: &str, state: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "not_ready", format!("session {id} is {state}"))
            .with_detail(json!({ "state": state }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

fn detail(e: &Error) -> Option<Value> {
    Some(match e {
        Error::RaggedRows { row, expected, found } => {
            json!({ "row": row, "expected": expected, "found": found })
        }
        Error::NonNumericCell { row, col, value } => json!({ "row": row, "col": col, "value": value }),
        Error::TooFewRows(n) | Error::TooFewColumns(n) => json!({ "found": n }),
        Error::DimensionMismatch { expected, found } => json!({ "expected": expected, "found": found }),
        Error::InvalidComponents { requested, max } => json!({ "requested": requested, "max": max }),
        Error::ComponentOutOfRange { index, available } => {
            json!({ "index": index, "available": available })
        }
        Error::EmptySelection(name) | Error::UnknownSelection(name) => json!({ "selection": name }),
        Error::IndexOutOfRange { index, limit } => json!({ "index": index, "limit": limit }),
        Error::PerplexityInfeasible { perplexity, n_samples } => {
            json!({ "perplexity": perplexity, "n_samples": n_samples })
        }
        Error::NumericalDivergence { epoch } => json!({ "epoch": epoch }),
        Error::FitDiverged { rms } => json!({ "rms": rms }),
        Error::OutsideBbox { x, y } => json!({ "x": x, "y": y }),
        Error::VersionMismatch { expected, found } => json!({ "expected": expected, "found": found }),
        _ => return None,
    })
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status =
            if e.is_client_error() { StatusCode::BAD_REQUEST } else { StatusCode::INTERNAL_SERVER_ERROR };
        ApiError {
            status,
            body: ErrorBody { code: e.code().to_owned(), message: e.to_string(), detail: detail(&e) },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_documented_codes() {
        let samples = [
            Error::NonNumericCell { row: 2, col: 1, value: "x".into() },
            Error::UnknownSelection("a".into()),
            Error::NumericalDivergence { epoch: 3 },
            Error::Io("disk".into()),
            Error::VersionMismatch { expected: 1, found: 2 },
        ];
        for e in samples {
            let api = ApiError::from(e.clone());
            assert!(ERROR_CODES.contains(&api.body.code.as_str()));
            let want = if e.is_client_error() { 400 } else { 500 };
            assert_eq!(api.status.as_u16(), want);
        }
        let api = ApiError::from(Error::NonNumericCell { row: 2, col: 1, value: "x".into() });
        assert_eq!(api.body.detail, Some(json!({ "row": 2, "col": 1, "value": "x" })));
    }
}
