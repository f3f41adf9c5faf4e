from qkdsim.cli import main
import sys

sys.exit(main())
