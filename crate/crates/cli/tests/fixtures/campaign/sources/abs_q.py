def main(*args):
    return_list = []
    x = int(args[0])
    if x < 0:
        x = -x
    return_list.append(str(x))
    return return_list
