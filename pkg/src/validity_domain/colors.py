"""Color functions for logging and summary tables."""

try:
    from colorama import Fore, Style, init

    init()

except ImportError:

    # no colorama, so just don't use colors.
    class Fore:
        """Dummy class to replace colorama.Fore."""

        RED = ""
        GREEN = ""
        YELLOW = ""
        BLUE = ""
        CYAN = ""
        BLACK = ""

    class Style:
        """Dummy class to replace colorama.Style."""

        RESET_ALL = ""
        BRIGHT = ""


def _color(color: str, bright: bool, text: str) -> str:
    if bright:
        return Style.BRIGHT + color + text + Style.RESET_ALL
    return color + text + Style.RESET_ALL


def bri_black(text: str) -> str:
    """Make text bright black."""
    return _color(Fore.BLACK, True, text)


def red(text: str) -> str:
    """Make text red."""
    return _color(Fore.RED, False, text)


def bri_red(text: str) -> str:
    """Make text bright red."""
    return _color(Fore.RED, True, text)


def green(text: str) -> str:
    """Make text green."""
    return _color(Fore.GREEN, False, text)


def bri_green(text: str) -> str:
    """Make text bright green."""
    return _color(Fore.GREEN, True, text)


def yellow(text: str) -> str:
    """Make text yellow."""
    return _color(Fore.YELLOW, False, text)


def bri_yellow(text: str) -> str:
    """Make text bright yellow."""
    return _color(Fore.YELLOW, True, text)


def blue(text: str) -> str:
    """Make text blue."""
    return _color(Fore.BLUE, False, text)


def bri_blue(text: str) -> str:
    """Make text bright blue."""
    return _color(Fore.BLUE, True, text)


def cyan(text: str) -> str:
    """Make text cyan."""
    return _color(Fore.CYAN, False, text)


def status(text: str) -> str:
    """
    Color a solver status for terminal output.

    Parameters
    ----------
    text : str
        One of the solver statuses ("optimal", "time_limit", "node_limit",
        "resolution_limit", "infeasible").

    Returns
    -------
    str
        The status, green when optimal, yellow when a limit was hit, red otherwise.
    """
    if text == "optimal":
        return bri_green(text)
    if text in ("time_limit", "node_limit", "resolution_limit"):
        return bri_yellow(text)
    return bri_red(text)
