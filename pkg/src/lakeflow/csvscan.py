"""Compiled kernels: batch FNV-1a and a fused CSV record scanner.

The scanner walks RFC-4180 bytes once and, per record, produces the FNV-1a
hash of the canonical serialization of selected columns, primary-key field
spans, and an optional parsed timestamp column, without creating any Python
objects.  A record is flagged ``SLOW`` whenever its raw text in a hashed,
keyed or timestamp column is not already in canonical form (or needs quote
unescaping for a key); callers recompute those records through the exact
Python path, so scanner output always agrees with ``cdc.row_hash``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x00000100000001B3

# record flags
SLOW = 1
NULL_KEY = 2

NULL_TS = np.iinfo(np.int64).min

# scanner error codes
ERR_NONE = 0
ERR_ARITY = 1
ERR_QUOTE = 2

_T_INT, _T_DEC, _T_TEXT, _T_BOOL, _T_TS = 0, 1, 2, 3, 4


@njit(cache=True)
def fnv1a_offsets(buf, offsets):
    """Hash ``buf[offsets[i]:offsets[i+1]]`` for every i."""
    n = offsets.shape[0] - 1
    out = np.empty(n, np.uint64)
    prime = np.uint64(FNV_PRIME)
    for i in range(n):
        h = np.uint64(FNV_OFFSET)
        for j in range(offsets[i], offsets[i + 1]):
            h = (h ^ np.uint64(buf[j])) * prime
        out[i] = h
    return out


@njit(cache=True)
def _is_digit(c):
    return 48 <= c <= 57


@njit(cache=True)
def _canon_int(buf, s, e):
    # -?(0|[1-9][0-9]*), excluding "-0"
    if buf[s] == 45:
        s += 1
        if s < e and buf[s] == 48:
            return False
    if s >= e:
        return False
    if buf[s] == 48:
        return e - s == 1
    for k in range(s, e):
        if not _is_digit(buf[k]):
            return False
    return True


@njit(cache=True)
def _canon_dec(buf, s, e):
    # -?(0|[1-9][0-9]*)(\.[0-9]+)? whose str(Decimal(.)) is itself: a zero integer
    # part allows at most 6 fraction digits before Decimal switches to exponent form.
    if buf[s] == 45:
        s += 1
    if s >= e:
        return False
    k = s
    while k < e and _is_digit(buf[k]):
        k += 1
    nint = k - s
    if nint == 0 or (nint > 1 and buf[s] == 48):
        return False
    if k == e:
        return True
    if buf[k] != 46:
        return False
    k += 1
    f0 = k
    while k < e and _is_digit(buf[k]):
        k += 1
    if k != e or k == f0:
        return False
    if buf[s] == 48 and k - f0 > 6:
        return False
    return True


@njit(cache=True)
def _canon_bool(buf, s, e):
    if e - s == 4:
        return buf[s] == 116 and buf[s + 1] == 114 and buf[s + 2] == 117 and buf[s + 3] == 101
    if e - s == 5:
        return (buf[s] == 102 and buf[s + 1] == 97 and buf[s + 2] == 108
                and buf[s + 3] == 115 and buf[s + 4] == 101)
    return False


@njit(cache=True)
def _num(buf, s, n):
    v = 0
    for k in range(s, s + n):
        c = buf[k]
        if not _is_digit(c):
            return -1
        v = v * 10 + (c - 48)
    return v


@njit(cache=True)
def _days_from_civil(y, m, d):
    if m <= 2:
        y -= 1
    era = y // 400
    yoe = y - era * 400
    mm = m - 3 if m > 2 else m + 9
    doy = (153 * mm + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


@njit(cache=True)
def _parse_canon_ts(buf, s, e):
    """Epoch ms of a canonical YYYY-MM-DDThh:mm:ss.sssZ field, or NULL_TS."""
    bad = np.int64(NULL_TS)
    if e - s != 24:
        return bad
    if (buf[s + 4] != 45 or buf[s + 7] != 45 or buf[s + 10] != 84 or buf[s + 13] != 58
            or buf[s + 16] != 58 or buf[s + 19] != 46 or buf[s + 23] != 90):
        return bad
    y = _num(buf, s, 4)
    mo = _num(buf, s + 5, 2)
    d = _num(buf, s + 8, 2)
    h = _num(buf, s + 11, 2)
    mi = _num(buf, s + 14, 2)
    sec = _num(buf, s + 17, 2)
    ms = _num(buf, s + 20, 3)
    if y < 0 or mo < 1 or mo > 12 or d < 1 or h < 0 or h > 23 or mi < 0 or mi > 59:
        return bad
    if sec < 0 or sec > 59 or ms < 0:
        return bad
    if mo == 2:
        leap = (y % 4 == 0 and y % 100 != 0) or y % 400 == 0
        dim = 29 if leap else 28
    elif mo == 4 or mo == 6 or mo == 9 or mo == 11:
        dim = 30
    else:
        dim = 31
    if d > dim:
        return bad
    days = _days_from_civil(y, mo, d)
    return np.int64(((days * 24 + h) * 60 + mi) * 60000 + sec * 1000 + ms)


@njit(cache=True)
def record_end(buf, pos):
    """Offset just past the first record starting at ``pos`` (including its newline)."""
    n = buf.shape[0]
    inq = False
    while pos < n:
        c = buf[pos]
        if inq:
            if c == 34:
                if pos + 1 < n and buf[pos + 1] == 34:
                    pos += 1
                else:
                    inq = False
        elif c == 34:
            inq = True
        elif c == 10:
            return pos + 1
        pos += 1
    return n


@njit(cache=True)
def scan(buf, start, ncols, types, hash_cols, key_cols, ts_col):
    """Tokenize records from ``start`` to the end of ``buf``.

    Returns (nrec, rec_start, rec_end, hashes, flags, kstart, kend, ts, err, err_rec).
    ``rec_end`` excludes the line terminator.  Blank lines are skipped.
    """
    n = buf.shape[0]
    cap = 1
    for k in range(start, n):
        if buf[k] == 10:
            cap += 1
    nk = key_cols.shape[0]
    nh = hash_cols.shape[0]
    rec_start = np.empty(cap, np.int64)
    rec_end = np.empty(cap, np.int64)
    hashes = np.empty(cap, np.uint64)
    flags = np.zeros(cap, np.uint8)
    kstart = np.empty((cap, max(nk, 1)), np.int64)
    kend = np.empty((cap, max(nk, 1)), np.int64)
    ts = np.empty(cap, np.int64)
    fs = np.empty(ncols, np.int64)
    fe = np.empty(ncols, np.int64)
    fesc = np.zeros(ncols, np.uint8)
    prime = np.uint64(FNV_PRIME)

    nrec = 0
    pos = start
    while pos < n:
        # blank line
        if buf[pos] == 10:
            pos += 1
            continue
        if buf[pos] == 13 and pos + 1 < n and buf[pos + 1] == 10:
            pos += 2
            continue
        rs = pos
        nf = 0
        done = False
        slow = False
        while not done:
            if pos < n and buf[pos] == 34:
                pos += 1
                cs = pos
                esc = False
                closed = False
                while pos < n:
                    if buf[pos] == 34:
                        if pos + 1 < n and buf[pos + 1] == 34:
                            esc = True
                            pos += 2
                            continue
                        closed = True
                        break
                    pos += 1
                if not closed:
                    return nrec, rec_start, rec_end, hashes, flags, kstart, kend, ts, ERR_QUOTE, nrec
                ce = pos
                pos += 1
                if pos < n and buf[pos] != 44 and buf[pos] != 10 and buf[pos] != 13:
                    return nrec, rec_start, rec_end, hashes, flags, kstart, kend, ts, ERR_QUOTE, nrec
            else:
                cs = pos
                esc = False
                while pos < n and buf[pos] != 44 and buf[pos] != 10 and buf[pos] != 13:
                    if buf[pos] == 34:
                        slow = True
                    pos += 1
                ce = pos
            if nf < ncols:
                fs[nf] = cs
                fe[nf] = ce
                fesc[nf] = 1 if esc else 0
            nf += 1
            if pos >= n:
                done = True
                re_ = n
            elif buf[pos] == 44:
                pos += 1
            elif buf[pos] == 10:
                re_ = pos
                pos += 1
                done = True
            elif buf[pos] == 13:
                re_ = pos
                if pos + 1 < n and buf[pos + 1] == 10:
                    pos += 2
                else:
                    pos += 1
                done = True
        if nf != ncols:
            return nrec, rec_start, rec_end, hashes, flags, kstart, kend, ts, ERR_ARITY, nrec

        rec_start[nrec] = rs
        rec_end[nrec] = re_
        fl = 0
        # hash over canonical serialization
        h = np.uint64(FNV_OFFSET)
        for j in range(nh):
            c = hash_cols[j]
            if j > 0:
                h = (h ^ np.uint64(31)) * prime
            s = fs[c]
            e = fe[c]
            if s == e:
                h = (h ^ np.uint64(0)) * prime
                continue
            h = (h ^ np.uint64(1)) * prime
            t = types[c]
            if t == _T_INT:
                if not _canon_int(buf, s, e):
                    slow = True
            elif t == _T_DEC:
                if not _canon_dec(buf, s, e):
                    slow = True
            elif t == _T_BOOL:
                if not _canon_bool(buf, s, e):
                    slow = True
            elif t == _T_TS:
                if _parse_canon_ts(buf, s, e) == NULL_TS:
                    slow = True
            if fesc[c]:
                k = s
                while k < e:
                    h = (h ^ np.uint64(buf[k])) * prime
                    if buf[k] == 34:
                        k += 2
                    else:
                        k += 1
            else:
                for k in range(s, e):
                    h = (h ^ np.uint64(buf[k])) * prime
        hashes[nrec] = h
        for j in range(nk):
            c = key_cols[j]
            s = fs[c]
            e = fe[c]
            kstart[nrec, j] = s
            kend[nrec, j] = e
            if s == e:
                fl |= NULL_KEY
                continue
            if fesc[c]:
                slow = True
            t = types[c]
            if t == _T_INT:
                if not _canon_int(buf, s, e):
                    slow = True
            elif t == _T_DEC:
                if not _canon_dec(buf, s, e):
                    slow = True
            elif t == _T_BOOL:
                if not _canon_bool(buf, s, e):
                    slow = True
            elif t == _T_TS:
                if _parse_canon_ts(buf, s, e) == NULL_TS:
                    slow = True
        if ts_col >= 0:
            s = fs[ts_col]
            e = fe[ts_col]
            if s == e:
                ts[nrec] = NULL_TS
            else:
                v = _parse_canon_ts(buf, s, e)
                if v == NULL_TS:
                    slow = True
                ts[nrec] = v
        if slow:
            fl |= SLOW
        flags[nrec] = fl
        nrec += 1
    return nrec, rec_start, rec_end, hashes, flags, kstart, kend, ts, ERR_NONE, -1
