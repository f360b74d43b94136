//! Serialization: explicit-format model interchange, PRISM-language export,
//! parameter files, property lists, and results CSV.

pub mod explicit;
pub mod params_file;
pub mod prism;
pub mod properties;
pub mod results;

pub use explicit::{
    export_explicit, export_json, parse_explicit, ExplicitModel, ExplicitParseError, ExportBundle,
};
pub use params_file::{load_params, parse_params_str, LoadError};
pub use prism::{export_prism_lang, ModelKind, PrismExportError};
pub use properties::{parse_properties, PropertyFileError, PropertyLine};
pub use results::{render_results_csv, PropertyResult};
