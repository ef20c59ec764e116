//! CSV ingestion and the price-series transforms.

use std::path::Path;

/// A data problem, pointing at the offending 1-based line where known.
#[derive(Debug)]
pub struct DataError {
    pub line: Option<usize>,
    pub message: String,
}

impl DataError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

// Dates compare numerically when both sides are integers, otherwise
// lexicographically (ISO dates order correctly either way).
fn date_after(prev: &str, next: &str) -> bool {
    match (prev.parse::<i64>(), next.parse::<i64>()) {
        (Ok(a), Ok(b)) => b > a,
        _ => next > prev,
    }
}

/// Read a `date,value` CSV with strictly increasing dates and finite
/// values. Returns the dates and values in file order.
pub fn ingest_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>), DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DataError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| DataError::new("empty file"))?;
    if header.trim() != "date,value" {
        return Err(DataError::at(1, format!("expected header `date,value`, got `{}`", header.trim())));
    }

    let mut dates: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(date), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(DataError::at(lineno, "expected exactly two fields"));
        };
        let date = date.trim().to_string();
        if date.is_empty() {
            return Err(DataError::at(lineno, "empty date"));
        }
        let parsed = value
            .trim()
            .parse::<f64>()
            .map_err(|_| DataError::at(lineno, format!("`{}` is not a number", value.trim())))?;
        if !parsed.is_finite() {
            return Err(DataError::at(lineno, format!("non-finite value `{}`", value.trim())));
        }
        if let Some(prev) = dates.last() {
            if !date_after(prev, &date) {
                return Err(DataError::at(
                    lineno,
                    format!("date `{date}` does not increase past `{prev}`"),
                ));
            }
        }
        dates.push(date);
        values.push(parsed);
    }
    Ok((dates, values))
}

fn check_positive(prices: &[f64]) -> Result<(), DataError> {
    if let Some(i) = prices.iter().position(|&p| p <= 0.0) {
        return Err(DataError::new(format!(
            "price at index {i} is {}; transforms need positive prices",
            prices[i]
        )));
    }
    Ok(())
}

/// One-day log returns `ln(p_t / p_{t-1})`; length `n - 1`.
pub fn transform_return(prices: &[f64]) -> Result<Vec<f64>, DataError> {
    check_positive(prices)?;
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Simple returns `p_t / p_{t-1} - 1`; length `n - 1`.
pub fn simple_returns(prices: &[f64]) -> Result<Vec<f64>, DataError> {
    check_positive(prices)?;
    Ok(prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

/// Squared volatility `(p_t / p_{t-1} - 1)^2`; length `n - 1`.
pub fn transform_volatility(prices: &[f64]) -> Result<Vec<f64>, DataError> {
    Ok(simple_returns(prices)?.into_iter().map(|r| r * r).collect())
}
