//! Just enough ZIP to hold an XLSX package: stored (uncompressed) entries,
//! a fixed modification time, and entries in the order they were added.

/// 1980-01-01 00:00:00, the MS-DOS epoch.
const DOS_TIME: u16 = 0;
const DOS_DATE: u16 = (1 << 5) | 1;

const LOCAL_HEADER: u32 = 0x0403_4b50;
const CENTRAL_HEADER: u32 = 0x0201_4b50;
const END_OF_CENTRAL_DIR: u32 = 0x0605_4b50;
const VERSION: u16 = 20;

struct Entry {
    name: String,
    crc: u32,
    size: u32,
    offset: u32,
}

pub(super) struct StoredZip {
    out: Vec<u8>,
    entries: Vec<Entry>,
}

fn put16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl StoredZip {
    pub(super) fn new() -> Self {
        StoredZip {
            out: Vec::new(),
            entries: Vec::new(),
        }
    }

    pub(super) fn add(&mut self, name: &str, data: &[u8]) {
        // ZIP64 is out of scope; a sheet would need millions of rows to hit this
        let size = u32::try_from(data.len()).expect("zip entry exceeds 4 GiB");
        let entry = Entry {
            name: name.to_string(),
            crc: crc32fast::hash(data),
            size,
            offset: self.out.len() as u32,
        };
        let out = &mut self.out;
        put32(out, LOCAL_HEADER);
        put16(out, VERSION);
        put16(out, 0); // flags
        put16(out, 0); // method: stored
        put16(out, DOS_TIME);
        put16(out, DOS_DATE);
        put32(out, entry.crc);
        put32(out, entry.size);
        put32(out, entry.size);
        put16(out, entry.name.len() as u16);
        put16(out, 0); // extra length
        out.extend_from_slice(entry.name.as_bytes());
        out.extend_from_slice(data);
        self.entries.push(entry);
    }

    pub(super) fn finish(mut self) -> Vec<u8> {
        let cd_start = self.out.len() as u32;
        let out = &mut self.out;
        for e in &self.entries {
            put32(out, CENTRAL_HEADER);
            put16(out, VERSION); // made by
            put16(out, VERSION); // needed
            put16(out, 0);
            put16(out, 0);
            put16(out, DOS_TIME);
            put16(out, DOS_DATE);
            put32(out, e.crc);
            put32(out, e.size);
            put32(out, e.size);
            put16(out, e.name.len() as u16);
            put16(out, 0); // extra
            put16(out, 0); // comment
            put16(out, 0); // disk number
            put16(out, 0); // internal attributes
            put32(out, 0); // external attributes
            put32(out, e.offset);
            out.extend_from_slice(e.name.as_bytes());
        }
        let cd_size = out.len() as u32 - cd_start;
        let n = self.entries.len() as u16;
        put32(out, END_OF_CENTRAL_DIR);
        put16(out, 0);
        put16(out, 0);
        put16(out, n);
        put16(out, n);
        put32(out, cd_size);
        put32(out, cd_start);
        put16(out, 0); // comment length
        self.out
    }
}
