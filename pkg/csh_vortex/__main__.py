import sys

from csh_vortex.app.main import main

sys.exit(main())
