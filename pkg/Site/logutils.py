'''
Logging utilities

Import "log" from here and call log.debug(msg) and friends. Everything the laboratory
logs goes through this one logger, "Attractors", configured in settings.LOGGING.

Two things are added to every record, for the formatters to use:

    relativeReference, relativeLast: seconds since the command started (see reset_timer)
        and since the previous message.
    run: the label of the run the logging thread is evolving, or "-" outside of one.
        Ensemble members evolve on a thread pool and their messages interleave, the
        label says which member a message is about.
'''
import re, logging, threading

from contextlib import contextmanager
from time import time

log = logging.getLogger("Attractors")

_current = threading.local()


class LabFilter(logging.Filter):
    '''
    A filter that never filters. It augments each record with timing and run context,
    the logging cookbook's way of adding contextual information:

        https://docs.python.org/3/howto/logging-cookbook.html#context-info

    Attached to the logger rather than a handler, so it sees every message the logger
    processes whichever handlers are configured.
    '''
    time_reference = None
    time_last = None

    # Leading and trailing newlines are split off the message, to be placed around the
    # whole formatted line by '%(prefix)s ... %(message)s ... %(postfix)s'.
    NEWLINES = re.compile(r'^(?P<before>\n*)(?P<message>.*?)(?P<after>\n*)$', re.DOTALL)

    def filter(self, record):
        now = time()
        if self.time_reference is None:
            self.time_reference = now
        if self.time_last is None:
            self.time_last = now

        parts = self.NEWLINES.match(str(record.msg)).groupdict()
        record.msg = parts['message']
        record.prefix = parts['before']
        record.postfix = parts['after']

        record.relativeReference = now - self.time_reference
        record.relativeLast = now - self.time_last
        record.run = getattr(_current, "label", None) or "-"

        self.time_last = now
        return True


lab_filter = LabFilter()
log.addFilter(lab_filter)


def reset_timer():
    '''
    Restarts relative timing. Management commands call this on entry.
    '''
    now = time()
    lab_filter.time_reference = now
    lab_filter.time_last = now
    log.debug(f"Reset logging timer to 0 at {now}.")
    return now


@contextmanager
def run_label(label):
    '''
    Tags messages logged by this thread inside the block with label.
    '''
    outer = getattr(_current, "label", None)
    _current.label = label
    try:
        yield
    finally:
        _current.label = outer
