//! Column tables and their CSV form. Header cells are `name [unit]`;
//! floats are written with 17 significant digits so a parse of an emitted
//! file reproduces every value bit for bit.

use anyhow::{anyhow, bail, Context};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }

    fn header(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }

    fn parse_header(cell: &str) -> anyhow::Result<Self> {
        let cell = cell.trim();
        let open = cell.rfind(" [").ok_or_else(|| anyhow!("header cell {cell:?} lacks a [unit]"))?;
        if !cell.ends_with(']') {
            bail!("header cell {cell:?} lacks a [unit]");
        }
        Ok(Self::new(&cell[..open], &cell[open + 2..cell.len() - 1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_cell(s: &str) -> Cell {
    match s {
        "NaN" => Cell::Num(f64::NAN),
        "inf" => Cell::Num(f64::INFINITY),
        "-inf" => Cell::Num(f64::NEG_INFINITY),
        _ => s.parse::<f64>().map(Cell::Num).unwrap_or_else(|_| Cell::Text(s.into())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<Column>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> anyhow::Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| anyhow!("table {} has no column {name:?}", self.name))
    }

    pub fn numeric_column(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].as_f64()
                    .ok_or_else(|| anyhow!("row {i} of column {name:?} is not numeric"))
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(Column::header))?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, self.to_csv_string()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn from_csv_str(name: &str, text: &str) -> anyhow::Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns = r
            .headers()?
            .iter()
            .map(Column::parse_header)
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut t = Table::new(name, columns);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != t.columns.len() {
                bail!("row {i} has {} cells, header has {}", rec.len(), t.columns.len());
            }
            t.rows.push(rec.iter().map(parse_cell).collect());
        }
        Ok(t)
    }

    pub fn read_csv(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
        Self::from_csv_str(name, &text).with_context(|| format!("parsing {}", path.display()))
    }
}
