
__version__ = "1.0.0"


def package_info():
    import rsrs
    import numpy
    import scipy
    return dict(
        name=rsrs.__package__,
        version=__version__,
        path=rsrs.__path__[0],
        numpy=numpy.__version__,
        scipy=scipy.__version__,
    )


def print_info():
    import sys
    info = package_info()
    py = sys.version_info
    print(info["name"],
          info["version"],
          "from", info["path"],
          "(python {x}.{y}, numpy {np}, scipy {sp})".format(
              x=py.major, y=py.minor, np=info["numpy"], sp=info["scipy"]))
