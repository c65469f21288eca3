"""Tiny `key = value` text format used for configs and calibration files."""


def parse_kv_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def format_kv_text(pairs):
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def read_kv(path):
    with open(path) as fh:
        return parse_kv_text(fh.read())


def write_kv(path, pairs):
    with open(path, "w") as fh:
        fh.write(format_kv_text(pairs))
