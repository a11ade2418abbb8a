"""
misc utility functions
"""

import os
import zlib
import errno
import logging
import argparse

import datetime as dt

import numpy as np


RANDOM_SEED = 2018

SEED_ENV = 'QN_SEED'


### logging

class UpToLevel(object):
    def __init__(self, lvl=logging.FATAL):
        self.lvl = lvl

    def filter(self, record):
        return record.levelno <= self.lvl


ROOT = '*'


def init_logging(file=None, stdout=False, stderr=False,
                 lo_lvl=logging.DEBUG, hi_lvl=logging.FATAL,
                 file_lo_lvl=None, stdout_lo_lvl=logging.INFO,
                 stderr_lo_lvl=None,
                 file_hi_lvl=None, stdout_hi_lvl=None, stderr_hi_lvl=None,
                 fmt='[%(asctime)s|%(levelname)s|%(module)s'
                     '.%(funcName)s:%(lineno)d] %(message)s',
                 datefmt='%Y-%m-%d_%H:%M:%S',
                 mode='w'):
    """
    attach handlers to the package root logger; returns the file handler
    (if any) so the caller can close it once the run is over
    """
    logger = logging.getLogger(ROOT)
    if is_(lo_lvl):
        logger.setLevel(lo_lvl)
    if is_(hi_lvl):
        logger.addFilter(UpToLevel(hi_lvl))

    levels = {'stdout': (stdout_lo_lvl, stdout_hi_lvl),
              'stderr': (stderr_lo_lvl, stderr_hi_lvl),
              'file':   (file_lo_lvl, file_hi_lvl)}

    file_handler = None
    for name, obj, args, prefix in [
        ('stdout', stdout,  [logging.sys.stdout], 'Stream'),
        ('stderr', stderr,                    (), 'Stream'),
        (  'file',   file,          (file, mode),   'File')
    ]:
        if obj:
            handler = getattr(logging, prefix + 'Handler')(*args)
            handler.setFormatter(logging.Formatter(fmt, datefmt))
            lo, hi = levels[name]
            if is_(lo):
                handler.setLevel(lo)
            if is_(hi):
                handler.addFilter(UpToLevel(hi))
            logger.addHandler(handler)
            if name == 'file':
                file_handler = handler
    return file_handler


def close_logging(handler=None):
    """detach every handler init_logging attached; close the file one"""
    logger = logging.getLogger(ROOT)
    for h in list(logger.handlers):
        logger.removeHandler(h)
    for f in list(logger.filters):
        logger.removeFilter(f)
    if handler is not None:
        handler.close()


def main_module_name(name, ext=True):
    if name == '__main__':
        try:
            main_file = __import__(name).__file__
            name_and_ext = main_file[main_file.rfind('/')+1:]
            if ext:
                return name_and_ext[:name_and_ext.rfind('.')]
            return name_and_ext
        except (ImportError, AttributeError):
            pass
    return name


def get_logger(name, main=False):
    name = main_module_name(name) if main else name
    return logging.getLogger(ROOT + '.' + name)


### timing

def time_stamp(fmt='%Y-%m-%d_%H-%M-%S'):
    return dt.datetime.now().strftime(fmt)


### io

def mkdir_p(path):
    try:
        os.makedirs(path)
    except OSError as e:
        if e.errno != errno.EEXIST:
            raise


### convenience

def is_(x):
    return x is not None


### parsing

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits on bad flags; raise instead so the caller owns exit codes
    def error(self, message):
        raise UsageError('%s: %s' % (self.prog, message))


def arg(*ar, **kw):
    return ar, kw


def parse_commands(commands, common=(), argv=None, prog=None):
    """
    commands: {name: (help, [arg(...), ...])}; every subcommand also gets
    the `common` args. the chosen subcommand lands in opts.command
    """
    parser = _Parser(prog=prog)
    sub = parser.add_subparsers(dest='command')
    for name, (help_, args) in commands.items():
        p = sub.add_parser(name, help=help_)
        for ar, kw in list(common) + list(args):
            p.add_argument(*ar, **kw)
    opts = parser.parse_args(argv)
    if not is_(opts.command):
        raise UsageError('missing subcommand, one of: %s'
                         % ', '.join(commands))
    return opts


### seeding

def resolve_seed(seed=None):
    if is_(seed):
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError('%s must be an integer, got %r' % (SEED_ENV, env))
    return RANDOM_SEED


def _stream_key(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode('utf8'))


def rng(seed, *names):
    """
    independent generator for the substream `names` of `seed`, e.g.
    rng(7, 'restart', 3). same (seed, names) -> same stream, whatever
    order the streams are drawn in
    """
    entropy = [int(seed)] + [_stream_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))
