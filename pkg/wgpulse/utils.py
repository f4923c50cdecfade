from pathlib import Path
import collections.abc
import hashlib
import logging
import json
import copy


def s_if(n):
    return '' if n == 1 else 's'


def flatten(dictionary: dict, parent_key: str = '', sep: str = '.'):
    """
    Collapse nested blocks into dotted keys, e.g. {'pulse': {'gamma_tp': 2.0}} becomes {'pulse.gamma_tp': 2.0}.
    Empty blocks are kept as values.

    Parameters
    ----------
    dictionary: dict
    parent_key: str
        Prefix for all keys of this level.
    sep: str

    Returns
    -------
    flat: dict
    """
    flat = {}
    for k, v in dictionary.items():
        key = f"{parent_key}{sep}{k}" if parent_key else str(k)
        if isinstance(v, collections.abc.Mapping) and v:
            flat.update(flatten(v, key, sep=sep))
        else:
            flat[key] = v
    return flat


def set_by_dotted_key(dictionary: dict, key: str, value, sep: str = '.'):
    """Set `value` in a nested dict at the flat key `key` (e.g. 'pulse.gamma_tp'), creating levels as needed."""
    parts = key.split(sep)
    d = dictionary
    for part in parts[:-1]:
        if not isinstance(d.get(part), dict):
            d[part] = {}
        d = d[part]
    d[parts[-1]] = value
    return dictionary


def merge_dicts(dict1, dict2):
    """
    Recursive merge where values of dict2 win; nested blocks are merged key by key.
    Neither input is modified.

    Parameters
    ----------
    dict1: dict
        Defaults.
    dict2: dict
        Overrides.

    Returns
    -------
    merged: dict
    """
    for name, d in [('dict1', dict1), ('dict2', dict2)]:
        if not isinstance(d, dict):
            raise ValueError(f"Expecting {name} to be dict, found {type(d)}.")

    merged = copy.deepcopy(dict1)
    for k, v in dict2.items():
        if isinstance(v, dict) and isinstance(dict1.get(k), dict):
            merged[k] = merge_dicts(dict1[k], v)
        else:
            merged[k] = copy.deepcopy(v)
    return merged


def make_hash(d: dict):
    """Hex digest identifying a resolved config; key order does not matter."""
    return hashlib.md5(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()


def file_digest(path: Path, chunk_size: int = 1 << 16):
    """SHA-256 hex digest of a file's content."""
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            sha.update(chunk)
    return sha.hexdigest()


def add_logging_level(level_name, level_num, method_name=None):
    """
    Register a logging level as `logging.<LEVEL_NAME>`, with a `logging.<method_name>` shortcut logging to
    the root logger and the same method on the logger class.
    """
    method_name = method_name or level_name.lower()
    for owner, attribute in [(logging, level_name), (logging, method_name), (logging.getLoggerClass(), method_name)]:
        if hasattr(owner, attribute):
            raise AttributeError(f"{attribute} already defined in {owner.__name__}.")

    def log_for_level(self, message, *args, **kwargs):
        if self.isEnabledFor(level_num):
            self._log(level_num, message, args, **kwargs)

    def log_to_root(message, *args, **kwargs):
        logging.log(level_num, message, *args, **kwargs)

    logging.addLevelName(level_num, level_name)
    setattr(logging, level_name, level_num)
    setattr(logging.getLoggerClass(), method_name, log_for_level)
    setattr(logging, method_name, log_to_root)


# between INFO and DEBUG: per-engine timings and progress bars
if not hasattr(logging, 'VERBOSE'):
    add_logging_level('VERBOSE', 19)


def verbose_enabled():
    """Whether progress bars and per-step messages should be shown."""
    return logging.root.isEnabledFor(logging.VERBOSE)


class LoggingFormatter(logging.Formatter):
    FORMATS = {
        logging.INFO: "%(msg)s",
        logging.VERBOSE: "%(msg)s",
        logging.DEBUG: "DEBUG: %(module)s: %(lineno)d: %(msg)s",
        "DEFAULT": "%(levelname)s: %(msg)s",
    }

    def format(self, record):
        return logging.Formatter(self.FORMATS.get(record.levelno, self.FORMATS['DEFAULT'])).format(record)
