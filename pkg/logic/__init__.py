# Logic module for the gas network mixture simulator