import sys
from .cli import standalone_cli
sys.exit(standalone_cli())
