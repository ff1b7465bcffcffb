# controllers package
