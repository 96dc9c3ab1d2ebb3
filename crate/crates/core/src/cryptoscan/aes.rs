//! AES key expansion (FIPS-197) and schedule matching against raw memory.
//!
//! The key schedule is fully determined by the key, so a key sitting in a
//! dump is betrayed by the 176/208/240-byte expansion that follows it.
//! Matching expands word by word and aborts on the first mismatch; random
//! data dies on the first expanded word, so scanning is near-linear.

/// Round constants for the first word of each key-expansion round.
const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36];

#[rustfmt::skip]
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// Key lengths the scanner understands, in bytes.
pub const KEY_LENGTHS: [usize; 3] = [16, 24, 32];

/// Expanded schedule length (key material included) for a key length.
pub fn schedule_len(key_len: usize) -> usize {
    match key_len {
        16 => 176, // 11 round keys
        24 => 208, // 13 round keys
        32 => 240, // 15 round keys
        other => panic!("unsupported AES key length {other}"),
    }
}

fn rounds_words(key_len: usize) -> usize {
    schedule_len(key_len) / 4
}

type Word = [u8; 4];

fn next_word(prev: Word, nk_back: Word, widx: usize, nk: usize) -> Word {
    let mut t = prev;
    if widx.is_multiple_of(nk) {
        // RotWord + SubWord + Rcon
        t = [
            SBOX[t[1] as usize],
            SBOX[t[2] as usize],
            SBOX[t[3] as usize],
            SBOX[t[0] as usize],
        ];
        t[0] ^= RCON[widx / nk - 1];
    } else if nk > 6 && widx % nk == 4 {
        t = [
            SBOX[t[0] as usize],
            SBOX[t[1] as usize],
            SBOX[t[2] as usize],
            SBOX[t[3] as usize],
        ];
    }
    [
        nk_back[0] ^ t[0],
        nk_back[1] ^ t[1],
        nk_back[2] ^ t[2],
        nk_back[3] ^ t[3],
    ]
}

/// Full key schedule for a 16/24/32-byte key, key material included.
pub fn expand_key(key: &[u8]) -> Vec<u8> {
    let nk = key.len() / 4;
    assert!(KEY_LENGTHS.contains(&key.len()), "bad key length");
    let total = rounds_words(key.len());
    let mut words: Vec<Word> = Vec::with_capacity(total);
    for chunk in key.chunks_exact(4) {
        words.push([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    for widx in nk..total {
        words.push(next_word(words[widx - 1], words[widx - nk], widx, nk));
    }
    words.into_iter().flatten().collect()
}

/// Does `blob[offset..]` hold a full schedule for the key at its start?
/// Expands incrementally and bails on the first mismatching word.
pub fn schedule_matches_at(blob: &[u8], offset: usize, key_len: usize) -> bool {
    let total = rounds_words(key_len);
    if offset + total * 4 > blob.len() {
        return false;
    }
    let nk = key_len / 4;
    let mut words = [[0u8; 4]; 60];
    for (w, chunk) in words[..nk]
        .iter_mut()
        .zip(blob[offset..offset + key_len].chunks_exact(4))
    {
        w.copy_from_slice(chunk);
    }
    for widx in nk..total {
        let expect = next_word(words[widx - 1], words[widx - nk], widx, nk);
        let at = offset + widx * 4;
        if blob[at..at + 4] != expect {
            return false;
        }
        words[widx] = expect;
    }
    true
}
