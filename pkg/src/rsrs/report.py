
import logging
from colorama import init, Fore


class ColorFormatter(logging.Formatter):
    Colors = {
        "DEBUG": Fore.BLUE,
        "INFO": Fore.GREEN,
        "WARNING": Fore.YELLOW,
        "ERROR": Fore.RED,
        "CRITICAL": Fore.MAGENTA,
    }

    def format(self, record):
        color = self.Colors.get(record.levelname, "")
        return color + logging.Formatter.format(self, record)


def init_logging():
    logger = logging.getLogger("rsrs")
    if any(h.name == "stream" for h in logger.handlers):
        return logger

    init(autoreset=True)

    formatter = ColorFormatter(
        fmt="%(asctime)s %(levelname)-8s %(message)s",
        datefmt="%X"
    )

    handler = logging.StreamHandler()
    handler.set_name("stream")
    handler.setFormatter(formatter)
    handler.setLevel(logging.WARNING)

    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)

    return logger


def log_levels(f, logger=None):
    """Log one line per tree level of factorization `f` at INFO

    """
    logger = logger or logging.getLogger("rsrs")
    for level in f.levels:
        logger.info(
            f"level {level.level:>2}: {level.boxes:>5} boxes, "
            f"atol {level.atol:.1e}, "
            f"rank {level.rank_min}/{level.rank_mean:.1f}/{level.rank_max}, "
            f"residual {level.residual_forward:.1e}"
            f"/{level.residual_adjoint:.1e}, "
            f"{level.seconds:.2f}s, {level.flagged} flagged"
        )
    logger.info(f"final skeleton {f.skeleton.size}, "
                f"{f.seconds:.2f}s factor, {f.sketch_seconds:.2f}s sketch")
