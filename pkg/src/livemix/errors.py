"""Exception types shared across the package."""


class LivemixError(Exception):
    """Base class for errors raised by livemix."""


class InputError(LivemixError):
    """Bad user input: malformed manifests, missing files, invalid configs.

    The CLI maps this to exit code 2; everything else maps to 3.
    """
