# Core functionality package