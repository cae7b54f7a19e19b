pub mod consistency;
pub mod cvtcheck;
pub mod evaluate;
pub mod gen;
pub mod pseudo;
pub mod warp;

use crate::error::CliError;

/// Serializes a result to pretty JSON on stdout; everything else the
/// subcommands report goes to stderr so stdout stays machine-readable.
pub fn emit_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
