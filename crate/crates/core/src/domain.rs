//! Canonical data model for crashes, physical tests and injured persons,
//! plus validated CSV ingestion and deterministic CSV emission.
//!
//! All speeds are stored in km/h at the data boundary; the simulator converts
//! to m/s internally. Categorical fields parse case-insensitively and emit in
//! canonical capitalized form. Missing optional values are empty CSV fields,
//! never `0`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Car width assumed when validating longitudinal lateral offsets at parse
/// time (twice the default simulator half-width).
pub const CAR_WIDTH_M: f64 = 1.8;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("{path}: missing or misnamed column(s): expected header `{expected}`, got `{got}`")]
    Schema {
        path: PathBuf,
        expected: String,
        got: String,
    },
    #[error("{path}:{line}: {msg}")]
    Value {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: use case {name} is out of the method's scope")]
    UseCase {
        path: PathBuf,
        line: usize,
        name: String,
    },
    #[error("{path}:{line}: avoided/collision_speed contradiction: {msg}")]
    Mismatch {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed CSV row: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

/// Conflict geometry shared by the use cases of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryClass {
    Crossing,
    Turning,
    Longitudinal,
}

/// Assessed use cases. UC7/UC8 (dooring) are outside the method's scope and
/// rejected at parse time; UC9 and UC12 are the only longitudinal cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UseCase {
    Uc1,
    Uc2,
    Uc3,
    Uc4,
    Uc5,
    Uc6,
    Uc9,
    Uc10,
    Uc11,
    Uc12,
}

impl UseCase {
    pub const ALL: [UseCase; 10] = [
        UseCase::Uc1,
        UseCase::Uc2,
        UseCase::Uc3,
        UseCase::Uc4,
        UseCase::Uc5,
        UseCase::Uc6,
        UseCase::Uc9,
        UseCase::Uc10,
        UseCase::Uc11,
        UseCase::Uc12,
    ];

    pub fn geometry(self) -> GeometryClass {
        match self {
            UseCase::Uc3 | UseCase::Uc4 | UseCase::Uc10 | UseCase::Uc11 => GeometryClass::Crossing,
            UseCase::Uc1 | UseCase::Uc2 | UseCase::Uc5 | UseCase::Uc6 => GeometryClass::Turning,
            UseCase::Uc9 | UseCase::Uc12 => GeometryClass::Longitudinal,
        }
    }

    pub fn vru_type(self) -> VruType {
        match self {
            UseCase::Uc10 | UseCase::Uc11 | UseCase::Uc12 => VruType::Pedestrian,
            _ => VruType::Cyclist,
        }
    }

    /// Parse a use-case label. `Err(Some(name))` marks a real but
    /// out-of-scope case (UC7/UC8); `Err(None)` an unknown label.
    fn parse_label(s: &str) -> Result<UseCase, Option<String>> {
        let t = s.trim().to_ascii_uppercase();
        match t.as_str() {
            "UC1" => Ok(UseCase::Uc1),
            "UC2" => Ok(UseCase::Uc2),
            "UC3" => Ok(UseCase::Uc3),
            "UC4" => Ok(UseCase::Uc4),
            "UC5" => Ok(UseCase::Uc5),
            "UC6" => Ok(UseCase::Uc6),
            "UC9" => Ok(UseCase::Uc9),
            "UC10" => Ok(UseCase::Uc10),
            "UC11" => Ok(UseCase::Uc11),
            "UC12" => Ok(UseCase::Uc12),
            "UC7" | "UC8" => Err(Some(t)),
            _ => Err(None),
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UseCase::Uc1 => "UC1",
            UseCase::Uc2 => "UC2",
            UseCase::Uc3 => "UC3",
            UseCase::Uc4 => "UC4",
            UseCase::Uc5 => "UC5",
            UseCase::Uc6 => "UC6",
            UseCase::Uc9 => "UC9",
            UseCase::Uc10 => "UC10",
            UseCase::Uc11 => "UC11",
            UseCase::Uc12 => "UC12",
        };
        f.write_str(s)
    }
}

macro_rules! simple_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $(Self::$variant => f.write_str($label)),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $(if t.eq_ignore_ascii_case($label) {
                    return Ok(Self::$variant);
                })+
                Err(format!(
                    "unknown {}: `{}` (expected one of {})",
                    stringify!($name),
                    t,
                    [$($label),+].join("/"),
                ))
            }
        }
    };
}

simple_enum!(VruType { Cyclist => "Cyclist", Pedestrian => "Pedestrian" });
simple_enum!(
    /// Sight obstruction between car and VRU before the conflict.
    SightObstruction {
        No => "No",
        NotPermanent => "NotPermanent",
        Permanent => "Permanent",
        Other => "Other",
    }
);
simple_enum!(Location { Urban => "Urban", Rural => "Rural" });
simple_enum!(
    /// Intervention capability exercised in a physical test.
    AlgorithmFamily {
        BrakingOnly => "BrakingOnly",
        BrakingAndSteering => "BrakingAndSteering",
    }
);
simple_enum!(
    /// Police-coded injury severity, ordered Slight < Serious < Fatal.
    InjurySeverity {
        Slight => "Slight",
        Serious => "Serious",
        Fatal => "Fatal",
    }
);

/// One pre-crash scenario: conflict geometry, initial speeds, covariates and
/// the collision speed of the original (un-assisted) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CrashRecord {
    pub id: String,
    pub use_case: UseCase,
    pub vru_type: VruType,
    /// km/h, > 0.
    pub car_speed_init: f64,
    /// km/h, ≥ 0.
    pub vru_speed_init: f64,
    /// Car front to conflict point at t = 0, metres, > 0.
    pub long_dist: f64,
    /// VRU to conflict point at t = 0, metres, signed by approach side.
    /// For longitudinal geometry this is the lateral overlap offset.
    pub lat_dist: f64,
    pub sight_obstruction: SightObstruction,
    pub location: Location,
    /// km/h, in [0, car_speed_init].
    pub original_collision_speed: f64,
}

/// One proving-ground test run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestObservation {
    pub use_case: UseCase,
    pub car_speed_init: f64,
    pub avoided: bool,
    /// Present iff not avoided.
    pub collision_speed: Option<f64>,
    pub algorithm_family: AlgorithmFamily,
}

/// One injured person from in-depth or target-region crash data.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub vru_type: VruType,
    pub injury: InjurySeverity,
    pub age: f64,
    pub gender: String,
    pub weather: String,
    pub surface: String,
    pub light: String,
    pub site: String,
    pub urban: bool,
    pub collision_speed: f64,
}

pub const CRASHES_HEADER: [&str; 10] = [
    "id",
    "use_case",
    "vru_type",
    "car_speed_init_kmh",
    "vru_speed_init_kmh",
    "long_dist_m",
    "lat_dist_m",
    "sight_obstruction",
    "location",
    "orig_collision_speed_kmh",
];

pub const TESTS_HEADER: [&str; 5] = [
    "use_case",
    "car_speed_init_kmh",
    "avoided",
    "collision_speed_kmh",
    "algorithm_family",
];

pub const PERSONS_HEADER: [&str; 10] = [
    "vru_type",
    "injury",
    "age",
    "gender",
    "weather",
    "surface",
    "light",
    "site",
    "urban",
    "collision_speed_kmh",
];

/// Canonical capitalization for free-form categorical tokens:
/// first character upper-case, the rest lower-case.
pub fn canonical_token(s: &str) -> String {
    let t = s.trim();
    let mut chars = t.chars();
    match chars.next() {
        None => String::new(),
        Some(c) => c.to_uppercase().collect::<String>() + &chars.as_str().to_lowercase(),
    }
}

struct RowReader {
    path: PathBuf,
    records: Vec<csv::StringRecord>,
}

impl RowReader {
    fn open(path: &Path, expected_header: &[&str]) -> Result<Self, DomainError> {
        let file = File::open(path).map_err(|source| DomainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| DomainError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected_header {
            return Err(DomainError::Schema {
                path: path.to_path_buf(),
                expected: expected_header.join(","),
                got: got.join(","),
            });
        }
        let mut records = Vec::new();
        for (idx, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| DomainError::Malformed {
                path: path.to_path_buf(),
                line: idx + 2,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(RowReader {
            path: path.to_path_buf(),
            records,
        })
    }

    fn value_err(&self, line: usize, msg: impl Into<String>) -> DomainError {
        DomainError::Value {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }
}

fn parse_f64(reader: &RowReader, line: usize, field: &str, raw: &str) -> Result<f64, DomainError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| reader.value_err(line, format!("{field}: not a number: `{raw}`")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(reader.value_err(line, format!("{field}: non-finite value")))
            }
        })
}

fn parse_bool(
    reader: &RowReader,
    line: usize,
    field: &str,
    raw: &str,
) -> Result<bool, DomainError> {
    let t = raw.trim();
    if t.eq_ignore_ascii_case("true") {
        Ok(true)
    } else if t.eq_ignore_ascii_case("false") {
        Ok(false)
    } else {
        Err(reader.value_err(line, format!("{field}: expected true/false, got `{raw}`")))
    }
}

fn parse_use_case(reader: &RowReader, line: usize, raw: &str) -> Result<UseCase, DomainError> {
    UseCase::parse_label(raw).map_err(|kind| match kind {
        Some(name) => DomainError::UseCase {
            path: reader.path.clone(),
            line,
            name,
        },
        None => reader.value_err(line, format!("unknown use case `{}`", raw.trim())),
    })
}

fn parse_enum<T: FromStr<Err = String>>(
    reader: &RowReader,
    line: usize,
    raw: &str,
) -> Result<T, DomainError> {
    raw.parse::<T>().map_err(|e| reader.value_err(line, e))
}

/// Parse and validate a crashes CSV. Row order is preserved, ids are unique,
/// and every record satisfies the `CrashRecord` invariants. Error lines are
/// 1-based file lines (the header is line 1).
pub fn parse_crashes(path: &Path) -> Result<Vec<CrashRecord>, DomainError> {
    let reader = RowReader::open(path, &CRASHES_HEADER)?;
    let mut out = Vec::with_capacity(reader.records.len());
    let mut seen_ids = HashSet::new();
    for (idx, rec) in reader.records.iter().enumerate() {
        let line = idx + 2;
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(reader.value_err(line, "empty id"));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(reader.value_err(line, format!("duplicate id `{id}`")));
        }
        let use_case = parse_use_case(&reader, line, &rec[1])?;
        let vru_type: VruType = parse_enum(&reader, line, &rec[2])?;
        if vru_type != use_case.vru_type() {
            return Err(reader.value_err(
                line,
                format!("vru_type {vru_type} is inconsistent with {use_case}"),
            ));
        }
        let car_speed_init = parse_f64(&reader, line, "car_speed_init_kmh", &rec[3])?;
        let vru_speed_init = parse_f64(&reader, line, "vru_speed_init_kmh", &rec[4])?;
        let long_dist = parse_f64(&reader, line, "long_dist_m", &rec[5])?;
        let lat_dist = parse_f64(&reader, line, "lat_dist_m", &rec[6])?;
        let sight_obstruction: SightObstruction = parse_enum(&reader, line, &rec[7])?;
        let location: Location = parse_enum(&reader, line, &rec[8])?;
        let original_collision_speed =
            parse_f64(&reader, line, "orig_collision_speed_kmh", &rec[9])?;

        if car_speed_init <= 0.0 {
            return Err(reader.value_err(line, "car_speed_init_kmh must be > 0"));
        }
        if vru_speed_init < 0.0 {
            return Err(reader.value_err(line, "vru_speed_init_kmh must be >= 0"));
        }
        if long_dist <= 0.0 {
            return Err(reader.value_err(line, "long_dist_m must be > 0"));
        }
        if original_collision_speed < 0.0 || original_collision_speed > car_speed_init {
            return Err(reader.value_err(
                line,
                format!(
                    "orig_collision_speed_kmh {original_collision_speed} outside [0, {car_speed_init}]"
                ),
            ));
        }
        if use_case.geometry() == GeometryClass::Longitudinal && lat_dist.abs() >= CAR_WIDTH_M {
            return Err(reader.value_err(
                line,
                format!("longitudinal lateral offset |{lat_dist}| must be < {CAR_WIDTH_M} m"),
            ));
        }
        out.push(CrashRecord {
            id,
            use_case,
            vru_type,
            car_speed_init,
            vru_speed_init,
            long_dist,
            lat_dist,
            sight_obstruction,
            location,
            original_collision_speed,
        });
    }
    Ok(out)
}

/// Parse and validate a tests CSV.
pub fn parse_tests(path: &Path) -> Result<Vec<TestObservation>, DomainError> {
    let reader = RowReader::open(path, &TESTS_HEADER)?;
    let mut out = Vec::with_capacity(reader.records.len());
    for (idx, rec) in reader.records.iter().enumerate() {
        let line = idx + 2;
        let use_case = parse_use_case(&reader, line, &rec[0])?;
        let car_speed_init = parse_f64(&reader, line, "car_speed_init_kmh", &rec[1])?;
        let avoided = parse_bool(&reader, line, "avoided", &rec[2])?;
        let speed_raw = rec[3].trim();
        let collision_speed = if speed_raw.is_empty() {
            None
        } else {
            Some(parse_f64(&reader, line, "collision_speed_kmh", speed_raw)?)
        };
        let algorithm_family: AlgorithmFamily = parse_enum(&reader, line, &rec[4])?;

        if car_speed_init <= 0.0 {
            return Err(reader.value_err(line, "car_speed_init_kmh must be > 0"));
        }
        match (avoided, collision_speed) {
            (true, Some(_)) => {
                return Err(DomainError::Mismatch {
                    path: reader.path.clone(),
                    line,
                    msg: "avoided=true but collision_speed_kmh present".into(),
                });
            }
            (false, None) => {
                return Err(DomainError::Mismatch {
                    path: reader.path.clone(),
                    line,
                    msg: "avoided=false but collision_speed_kmh missing".into(),
                });
            }
            _ => {}
        }
        if let Some(v) = collision_speed {
            if v < 0.0 || v > car_speed_init {
                return Err(reader.value_err(
                    line,
                    format!("collision_speed_kmh {v} outside [0, {car_speed_init}]"),
                ));
            }
        }
        let expected_family = match use_case.geometry() {
            GeometryClass::Longitudinal => AlgorithmFamily::BrakingAndSteering,
            _ => AlgorithmFamily::BrakingOnly,
        };
        if algorithm_family != expected_family {
            return Err(reader.value_err(
                line,
                format!("{use_case} tests must carry {expected_family}"),
            ));
        }
        out.push(TestObservation {
            use_case,
            car_speed_init,
            avoided,
            collision_speed,
            algorithm_family,
        });
    }
    Ok(out)
}

/// Parse and validate a persons CSV.
pub fn parse_persons(path: &Path) -> Result<Vec<PersonRecord>, DomainError> {
    let reader = RowReader::open(path, &PERSONS_HEADER)?;
    let mut out = Vec::with_capacity(reader.records.len());
    for (idx, rec) in reader.records.iter().enumerate() {
        let line = idx + 2;
        let vru_type: VruType = parse_enum(&reader, line, &rec[0])?;
        let injury: InjurySeverity = parse_enum(&reader, line, &rec[1])?;
        let age = parse_f64(&reader, line, "age", &rec[2])?;
        if !(0.0..=130.0).contains(&age) {
            return Err(reader.value_err(line, format!("age {age} outside [0, 130]")));
        }
        let urban = parse_bool(&reader, line, "urban", &rec[8])?;
        let collision_speed = parse_f64(&reader, line, "collision_speed_kmh", &rec[9])?;
        if collision_speed < 0.0 {
            return Err(reader.value_err(line, "collision_speed_kmh must be >= 0"));
        }
        for (i, name) in [
            (3, "gender"),
            (4, "weather"),
            (5, "surface"),
            (6, "light"),
            (7, "site"),
        ] {
            if rec[i].trim().is_empty() {
                return Err(reader.value_err(line, format!("{name}: empty field")));
            }
        }
        out.push(PersonRecord {
            vru_type,
            injury,
            age,
            gender: canonical_token(&rec[3]),
            weather: canonical_token(&rec[4]),
            surface: canonical_token(&rec[5]),
            light: canonical_token(&rec[6]),
            site: canonical_token(&rec[7]),
            urban,
            collision_speed,
        });
    }
    Ok(out)
}

/// One CSV cell for [`emit_table`].
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Empty,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

/// Render a number with at most 6 significant digits; integral values print
/// without a decimal point, trailing zeros are trimmed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let ax = x.abs();
    if x.fract() == 0.0 && ax < 1e15 {
        return format!("{}", x as i64);
    }
    let exp = ax.log10().floor() as i32;
    if !(-9..15).contains(&exp) {
        return format!("{x:e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn escape_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_cell(cell: &Cell) -> String {
    match cell {
        Cell::Str(s) => escape_cell(s),
        Cell::Num(v) => format_number(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Empty => String::new(),
    }
}

/// Write a table as RFC-4180-style CSV: UTF-8, `\n` line endings, numbers at
/// 6 significant digits. Bit-identical output for identical input.
pub fn emit_table(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), DomainError> {
    let io_err = |source| DomainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.iter().map(render_cell).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Emit crashes in the canonical schema.
pub fn emit_crashes(path: &Path, records: &[CrashRecord]) -> Result<(), DomainError> {
    let rows: Vec<Vec<Cell>> = records
        .iter()
        .map(|r| {
            vec![
                Cell::Str(r.id.clone()),
                Cell::Str(r.use_case.to_string()),
                Cell::Str(r.vru_type.to_string()),
                Cell::Num(r.car_speed_init),
                Cell::Num(r.vru_speed_init),
                Cell::Num(r.long_dist),
                Cell::Num(r.lat_dist),
                Cell::Str(r.sight_obstruction.to_string()),
                Cell::Str(r.location.to_string()),
                Cell::Num(r.original_collision_speed),
            ]
        })
        .collect();
    emit_table(path, &CRASHES_HEADER, &rows)
}

/// Emit test observations in the canonical schema.
pub fn emit_tests(path: &Path, records: &[TestObservation]) -> Result<(), DomainError> {
    let rows: Vec<Vec<Cell>> = records
        .iter()
        .map(|r| {
            vec![
                Cell::Str(r.use_case.to_string()),
                Cell::Num(r.car_speed_init),
                Cell::Str(r.avoided.to_string()),
                r.collision_speed.map_or(Cell::Empty, Cell::Num),
                Cell::Str(r.algorithm_family.to_string()),
            ]
        })
        .collect();
    emit_table(path, &TESTS_HEADER, &rows)
}

/// Emit person records in the canonical schema.
pub fn emit_persons(path: &Path, records: &[PersonRecord]) -> Result<(), DomainError> {
    let rows: Vec<Vec<Cell>> = records
        .iter()
        .map(|r| {
            vec![
                Cell::Str(r.vru_type.to_string()),
                Cell::Str(r.injury.to_string()),
                Cell::Num(r.age),
                Cell::Str(r.gender.clone()),
                Cell::Str(r.weather.clone()),
                Cell::Str(r.surface.clone()),
                Cell::Str(r.light.clone()),
                Cell::Str(r.site.clone()),
                Cell::Str(r.urban.to_string()),
                Cell::Num(r.collision_speed),
            ]
        })
        .collect();
    emit_table(path, &PERSONS_HEADER, &rows)
}
