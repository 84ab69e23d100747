# flipscope test suite
