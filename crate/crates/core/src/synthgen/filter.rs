use crate::textmetrics::lcs_chars;

use super::SynthError;

/// Share of `output` characters not accounted for by its LCS with `input`.
pub fn added_fraction(input: &str, output: &str) -> Result<f64, SynthError> {
    let len = output.chars().count();
    if len == 0 {
        return Err(SynthError::EmptyText("output"));
    }
    Ok((len - lcs_chars(input, output)) as f64 / len as f64)
}

/// Share of `input` characters not carried over into `output`.
pub fn removed_fraction(input: &str, output: &str) -> Result<f64, SynthError> {
    let len = input.chars().count();
    if len == 0 {
        return Err(SynthError::EmptyText("input"));
    }
    Ok((len - lcs_chars(input, output)) as f64 / len as f64)
}
