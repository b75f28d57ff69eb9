# edgecascade test package
