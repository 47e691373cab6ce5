import sys
from memdes.cli import main
sys.exit(main())
